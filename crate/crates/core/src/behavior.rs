//! Behavior-modality embeddings from item co-occurrence.
//!
//! Items adjacent in a user's sequence (within `window` positions and
//! `max_gap_seconds` of each other) form skip-gram pairs; item vectors are then
//! trained with negative sampling against a unigram^0.75 noise distribution.

use rand::distr::weighted::WeightedIndex;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingTable, InteractionLog, Modality};
use crate::error::{Error, Result};
use crate::tensor::{dot, DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub max_gap_seconds: u64,
    pub negatives_per_pair: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 64, window: 2, max_gap_seconds: 60, negatives_per_pair: 5, epochs: 5, learning_rate: 0.025, seed: 7 }
    }
}

impl SkipGramConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.dim < 2 {
            out.push(("dim", "must be at least 2".into()));
        }
        if self.window == 0 {
            out.push(("window", "must be at least 1".into()));
        }
        if self.max_gap_seconds == 0 {
            out.push(("max_gap_seconds", "must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(("learning_rate", "must be positive".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::InvalidArg(format!("behavior.{k} {m}"))),
        }
    }
}

/// Ordered (center, context) pair of item indices into the log vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CooccurrencePair {
    pub center: usize,
    pub context: usize,
}

pub fn build_cooccurrence_pairs(log: &InteractionLog, config: &SkipGramConfig) -> Vec<CooccurrencePair> {
    let mut pairs = Vec::new();
    for seq in log.sequences() {
        for (i, &(a, ta)) in seq.iter().enumerate() {
            for &(b, tb) in seq.iter().skip(i + 1).take(config.window) {
                if a == b || tb.abs_diff(ta) > config.max_gap_seconds {
                    continue;
                }
                pairs.push(CooccurrencePair { center: a, context: b });
                pairs.push(CooccurrencePair { center: b, context: a });
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramOutput {
    pub table: EmbeddingTable<f32>,
    /// Mean negative-sampling loss per pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn train_item2vec(
    pairs: &[CooccurrencePair],
    vocabulary: &[String],
    config: &SkipGramConfig,
) -> Result<SkipGramOutput> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let n = vocabulary.len();
    if let Some(p) = pairs.iter().find(|p| p.center >= n || p.context >= n) {
        return Err(Error::UnknownId(format!("item index {}", p.center.max(p.context))));
    }
    let dim = config.dim;
    let mut rng = RngState::new(config.seed);
    let mut center = DenseMatrix::from_fn(n, dim, |_, _| (rng.uniform() - 0.5) / dim as f64);
    let mut context = DenseMatrix::<f64>::zeros(n, dim);

    let mut freq = vec![0.0f64; n];
    for p in pairs {
        freq[p.context] += 1.0;
    }
    let noise = WeightedIndex::new(freq.iter().map(|f| f.powf(0.75))).map_err(|_| Error::EmptyPairs)?;

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let total_steps = (config.epochs * pairs.len()).max(1) as f64;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut grad_center = vec![0.0f64; dim];
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut loss = 0.0;
        for &k in &order {
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
            step += 1;
            let CooccurrencePair { center: c, context: o } = pairs[k];
            grad_center.fill(0.0);
            let mut update = |target: usize, label: f64, center: &DenseMatrix<f64>, context: &mut DenseMatrix<f64>| {
                let score = dot(center.row(c), context.row(target));
                let sign = if label > 0.0 { 1.0 } else { -1.0 };
                let l = -log_sigmoid(sign * score);
                let g = lr * (label - sigmoid(score));
                for (gc, &w) in grad_center.iter_mut().zip(context.row(target)) {
                    *gc += g * w;
                }
                for (w, &cv) in context.row_mut(target).iter_mut().zip(center.row(c)) {
                    *w += g * cv;
                }
                l
            };
            loss += update(o, 1.0, &center, &mut context);
            for _ in 0..config.negatives_per_pair {
                let neg = rng.sample(&noise);
                if neg == o {
                    continue;
                }
                loss += update(neg, 0.0, &center, &mut context);
            }
            for (w, &g) in center.row_mut(c).iter_mut().zip(&grad_center) {
                *w += g;
            }
        }
        let mean = loss / pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        log::debug!("item2vec epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    let table = EmbeddingTable::new(vocabulary.to_vec(), center.cast::<f32>(), Modality::Behavior)?;
    Ok(SkipGramOutput { table, epoch_losses })
}

/// Pairs from `log` followed by training over the log's full item vocabulary.
pub fn pretrain_behavior(log: &InteractionLog, config: &SkipGramConfig) -> Result<SkipGramOutput> {
    let pairs = build_cooccurrence_pairs(log, config);
    log::info!("item2vec: {} co-occurrence pairs over {} items", pairs.len(), log.num_items());
    train_item2vec(&pairs, log.items(), config)
}
