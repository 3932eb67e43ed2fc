use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::loss::infonce_indexed;
use super::tower::{user_features, TowerConfig, TowerParams, UserFeatures};
use crate::data::{InteractionLog, ProfileTable};
use crate::edis::{interpolate_hard, interpolate_simple, simple_virtual_backward, virtual_count, InterpolationConfig, VirtualMix};
use crate::error::{Error, Result};
use crate::eval::{uns_sampler, PopularitySampler};
use crate::msac::SemanticIndex;
use crate::optim::{Adam, AdamConfig};
use crate::sampler::{draw_negatives, SamplerConfig};
use crate::tensor::RngState;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeStrategy {
    /// Cluster-aware simple and hard negatives from a semantic index.
    Esans,
    /// Uniform over the catalogue.
    Uniform,
    /// Proportional to `count^pns_exponent`.
    Popularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EbrConfig {
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub tower: TowerConfig,
    pub strategy: NegativeStrategy,
    /// Real negatives per positive for the uniform and popularity strategies.
    pub baseline_negatives: usize,
    pub pns_exponent: f64,
    pub simple_interpolation: bool,
    pub hard_interpolation: bool,
    /// Add the other examples' real negatives to every denominator.
    pub share_negatives: bool,
    pub sampler: SamplerConfig,
    pub interpolation: InterpolationConfig,
    pub seed: u64,
}

impl Default for EbrConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            learning_rate: 0.0002,
            epochs: 5,
            batch_size: 64,
            tower: TowerConfig::default(),
            strategy: NegativeStrategy::Esans,
            baseline_negatives: 10,
            pns_exponent: 0.75,
            simple_interpolation: true,
            hard_interpolation: true,
            share_negatives: true,
            sampler: SamplerConfig::default(),
            interpolation: InterpolationConfig::default(),
            seed: 31,
        }
    }
}

impl EbrConfig {
    /// `(key path, message)` for every violated invariant, including nested configs.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, m: &str| out.push((k.to_string(), m.to_string()));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            push("tau", "must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            push("learning_rate", "must be positive");
        }
        if self.batch_size == 0 {
            push("batch_size", "must be positive");
        }
        if self.baseline_negatives == 0 {
            push("baseline_negatives", "must be positive");
        }
        if !self.pns_exponent.is_finite() {
            push("pns_exponent", "must be finite");
        }
        out.extend(self.tower.violations().into_iter().map(|(k, m)| (format!("tower.{k}"), m)));
        out.extend(self.sampler.violations().into_iter().map(|(k, m)| (format!("sampler.{k}"), m)));
        out.extend(self.interpolation.violations().into_iter().map(|(k, m)| (format!("interpolation.{k}"), m)));
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::InvalidArg(format!("ebr.{k} {m}"))),
        }
    }
}

/// One training example: user features at the moment of the positive interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub user: usize,
    pub features: UserFeatures,
    pub positive: usize,
}

/// Every interaction becomes an example whose history is the preceding `seq_cap` items.
pub fn build_examples(log: &InteractionLog, profiles: &ProfileTable, seq_cap: usize) -> Vec<Example> {
    let mut out = Vec::with_capacity(log.len());
    for (u, user_id) in log.users().iter().enumerate() {
        let items: Vec<usize> = log.sequence(u).iter().map(|&(i, _)| i).collect();
        for t in 0..items.len() {
            out.push(Example { user: u, features: user_features(&items[..t], profiles, user_id, seq_cap), positive: items[t] });
        }
    }
    out
}

/// Real negatives of one example, as item indices of the training log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExampleNegatives {
    /// Simple negatives grouped by source cluster; baselines use one group.
    pub simple: Vec<Vec<usize>>,
    pub hard: Vec<usize>,
}

impl ExampleNegatives {
    pub fn real(&self) -> impl Iterator<Item = usize> + '_ {
        self.simple.iter().flatten().copied().chain(self.hard.iter().copied())
    }
}

/// A batch with its negatives fixed; `edis_seed` fixes the interpolation permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub examples: Vec<Example>,
    pub negatives: Vec<ExampleNegatives>,
    pub edis_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    /// Mean number of negatives per example, shared pool included.
    pub mean_negatives: f64,
    pub simple_virtuals: usize,
    pub hard_virtuals: usize,
}

struct SimpleRecord {
    rows: Vec<usize>,
    mixes: Vec<VirtualMix<f64>>,
    first: usize,
}

struct HardRecord {
    positive: usize,
    hard: Vec<usize>,
    first: usize,
}

/// Loss of one batch and its gradient with respect to every tower parameter.
/// Virtual negatives are differentiable functions of the encoded items.
pub fn ebr_objective(params: &TowerParams, batch: &Batch, config: &EbrConfig) -> Result<(BatchStats, TowerParams)> {
    let n = batch.examples.len();
    Error::dims(n, batch.negatives.len())?;
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    for (ex, neg) in batch.examples.iter().zip(&batch.negatives) {
        for it in std::iter::once(ex.positive).chain(neg.real()) {
            let next = rows.len();
            rows.entry(it).or_insert(next);
        }
    }
    let mut items = vec![0; rows.len()];
    for (&it, &r) in &rows {
        items[r] = it;
    }
    let (item_cache, encoded) = params.encode_items_cached(&items)?;
    let users: Vec<UserFeatures> = batch.examples.iter().map(|e| e.features.clone()).collect();
    let (user_cache, user_out) = params.encode_users_cached(&users)?;

    let d = params.d_k();
    // baseline negatives are never interpolated
    let interpolate = config.strategy == NegativeStrategy::Esans;
    let eta = config.interpolation.eta;
    let lambda = config.interpolation.lambda;
    let mut cand = encoded.as_slice().to_vec();
    let mut n_cand = items.len();
    let mut simple_records = Vec::new();
    let mut hard_records = Vec::new();
    let mut rng = RngState::new(batch.edis_seed);
    let mut own: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut stats = BatchStats::default();

    for (ex, neg) in batch.examples.iter().zip(&batch.negatives) {
        let mut mine: Vec<usize> = neg.real().map(|it| rows[&it]).collect();
        let real = mine.len();
        let mut expected_virtual = 0;
        if interpolate && config.simple_interpolation {
            for g in neg.simple.iter().filter(|g| g.len() >= 2) {
                let g_rows: Vec<usize> = g.iter().map(|it| rows[it]).collect();
                let refs: Vec<&[f64]> = g_rows.iter().map(|&r| encoded.row(r)).collect();
                let mixes = interpolate_simple(&refs, eta, &mut rng)?;
                expected_virtual += virtual_count(g.len())?;
                mine.extend(n_cand..n_cand + mixes.len());
                for m in &mixes {
                    cand.extend_from_slice(&m.vector);
                }
                simple_records.push(SimpleRecord { rows: g_rows, mixes, first: n_cand });
                n_cand = cand.len() / d;
            }
        }
        stats.simple_virtuals += expected_virtual;
        if interpolate && config.hard_interpolation && !neg.hard.is_empty() {
            let pos = rows[&ex.positive];
            let h_rows: Vec<usize> = neg.hard.iter().map(|it| rows[it]).collect();
            let refs: Vec<&[f64]> = h_rows.iter().map(|&r| encoded.row(r)).collect();
            let virt = interpolate_hard(encoded.row(pos), &refs, lambda)?;
            mine.extend(n_cand..n_cand + virt.len());
            for v in &virt {
                cand.extend_from_slice(v);
            }
            expected_virtual += virt.len();
            stats.hard_virtuals += virt.len();
            hard_records.push(HardRecord { positive: pos, hard: h_rows, first: n_cand });
            n_cand = cand.len() / d;
        }
        assert_eq!(mine.len(), real + expected_virtual, "negative accounting");
        own.push(mine);
    }

    let real_rows: Vec<Vec<usize>> = batch.negatives.iter().map(|neg| neg.real().map(|it| rows[&it]).collect()).collect();
    let mut negatives = Vec::with_capacity(n);
    for (i, mut mine) in own.into_iter().enumerate() {
        let pos = rows[&batch.examples[i].positive];
        let own_count = mine.len();
        let mut pooled = 0;
        if config.share_negatives {
            for (k, other) in real_rows.iter().enumerate() {
                if k != i {
                    let before = mine.len();
                    mine.extend(other.iter().copied().filter(|&r| r != pos));
                    pooled += mine.len() - before;
                }
            }
        }
        assert_eq!(mine.len(), own_count + pooled, "negative accounting");
        if mine.is_empty() {
            return Err(Error::InvalidArg(format!("example {i} has no negatives")));
        }
        negatives.push(mine);
    }
    stats.mean_negatives = negatives.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;

    let candidates = Matrix::new(n_cand, d, cand)?;
    let positives: Vec<usize> = batch.examples.iter().map(|e| rows[&e.positive]).collect();
    let out = infonce_indexed(&user_out, &candidates, &positives, &negatives, config.tau)?;
    stats.loss = out.loss;

    let gc = out.grad_candidates;
    let mut g_items = Matrix::from_fn(items.len(), d, |r, c| gc.get(r, c));
    for rec in &simple_records {
        let refs: Vec<&[f64]> = rec.rows.iter().map(|&r| encoded.row(r)).collect();
        let mut local = vec![vec![0.0; d]; rec.rows.len()];
        for (k, m) in rec.mixes.iter().enumerate() {
            simple_virtual_backward(&refs, m, eta, gc.row(rec.first + k), &mut local)?;
        }
        for (&r, g) in rec.rows.iter().zip(&local) {
            for (o, &x) in g_items.row_mut(r).iter_mut().zip(g) {
                *o += x;
            }
        }
    }
    for rec in &hard_records {
        for (k, &h) in rec.hard.iter().enumerate() {
            let g = gc.row(rec.first + k).to_vec();
            for (o, &x) in g_items.row_mut(rec.positive).iter_mut().zip(&g) {
                *o += lambda * x;
            }
            for (o, &x) in g_items.row_mut(h).iter_mut().zip(&g) {
                *o += (1.0 - lambda) * x;
            }
        }
    }
    let mut grads = params.zeros_like();
    params.backward_items(&items, &item_cache, &g_items, &mut grads)?;
    params.backward_users(&users, &user_cache, &out.grad_users, &mut grads)?;
    Ok((stats, grads))
}

/// Draws real negatives for a list of positives, as training-log item indices.
pub struct NegativeSource<'a> {
    strategy: NegativeStrategy,
    index: Option<(&'a SemanticIndex, Vec<usize>, Vec<usize>)>,
    popularity: Option<PopularitySampler>,
    num_items: usize,
    config: EbrConfig,
}

impl<'a> NegativeSource<'a> {
    pub fn new(log: &InteractionLog, index: Option<&'a SemanticIndex>, config: &EbrConfig) -> Result<Self> {
        let mut source = Self { strategy: config.strategy, index: None, popularity: None, num_items: log.num_items(), config: config.clone() };
        match config.strategy {
            NegativeStrategy::Esans => {
                let index = index.ok_or_else(|| Error::InvalidArg("esans negatives need a semantic index".into()))?;
                let to_index = log
                    .items()
                    .iter()
                    .map(|id| index.item_idx(id).ok_or_else(|| Error::UnknownId(id.clone())))
                    .collect::<Result<Vec<_>>>()?;
                let mut to_log = vec![usize::MAX; index.len()];
                for (l, &x) in to_index.iter().enumerate() {
                    to_log[x] = l;
                }
                source.index = Some((index, to_index, to_log));
            }
            NegativeStrategy::Popularity => {
                source.popularity = Some(PopularitySampler::new(&log.popularity(), config.pns_exponent)?);
            }
            NegativeStrategy::Uniform => {}
        }
        Ok(source)
    }

    pub fn draw(&self, positive: usize, rng: &mut RngState) -> Result<ExampleNegatives> {
        let n = self.config.baseline_negatives;
        Ok(match self.strategy {
            NegativeStrategy::Uniform => ExampleNegatives { simple: vec![uns_sampler(self.num_items, positive, n, rng)], hard: vec![] },
            NegativeStrategy::Popularity => {
                let s = self.popularity.as_ref().expect("popularity sampler");
                ExampleNegatives { simple: vec![s.sample(positive, n, rng)], hard: vec![] }
            }
            NegativeStrategy::Esans => {
                let (index, to_index, to_log) = self.index.as_ref().expect("semantic index");
                let draw = draw_negatives(index, to_index[positive], &self.config.sampler, rng)?;
                let map = |x: usize| {
                    let l = to_log[x];
                    if l == usize::MAX {
                        Err(Error::UnknownId(index.items()[x].clone()))
                    } else {
                        Ok(l)
                    }
                };
                ExampleNegatives {
                    simple: draw.simple.iter().map(|g| g.items.iter().map(|&x| map(x)).collect()).collect::<Result<_>>()?,
                    hard: draw.hard.iter().map(|&x| map(x)).collect::<Result<_>>()?,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub mean_negatives: f64,
    pub batches: usize,
}

/// Trained towers plus the item order their embedding rows follow.
#[derive(Debug, Clone, PartialEq)]
pub struct EbrModel {
    pub params: TowerParams,
    pub items: Vec<String>,
    pub epochs: Vec<EpochStats>,
}

pub fn init_params(log: &InteractionLog, profiles: &ProfileTable, config: &EbrConfig) -> TowerParams {
    let vocab: Vec<usize> = profiles.vocab_sizes().iter().map(|&v| v as usize).collect();
    TowerParams::random(log.num_items(), &vocab, &config.tower, &mut RngState::new(config.seed).fork(0))
}

/// Mini-batch Adam on the InfoNCE objective with the configured negatives.
pub fn train_ebr(log: &InteractionLog, profiles: &ProfileTable, index: Option<&SemanticIndex>, config: &EbrConfig) -> Result<EbrModel> {
    config.validate()?;
    if log.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = init_params(log, profiles, config);
    let source = NegativeSource::new(log, index, config)?;
    let examples = build_examples(log, profiles, config.tower.seq_cap);
    let sizes: Vec<usize> = params.blocks().iter().map(|b| b.len()).collect();
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate), &sizes);
    let mut shuffle_rng = RngState::new(config.seed).fork(1);
    let mut neg_rng = RngState::new(config.sampler.seed).fork(config.seed);
    let mut edis_rng = RngState::new(config.interpolation.seed).fork(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut acc = EpochStats::default();
        for chunk in order.chunks(config.batch_size) {
            let batch_examples: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let negatives = batch_examples.iter().map(|e| source.draw(e.positive, &mut neg_rng)).collect::<Result<Vec<_>>>()?;
            let batch = Batch { examples: batch_examples, negatives, edis_seed: edis_rng.next_u64() };
            let (stats, grads) = ebr_objective(&params, &batch, config)?;
            let g = grads.blocks();
            adam.step(&mut params.blocks_mut(), &g);
            acc.loss += stats.loss;
            acc.mean_negatives += stats.mean_negatives;
            acc.batches += 1;
        }
        let b = acc.batches.max(1) as f64;
        let stats = EpochStats { loss: acc.loss / b, mean_negatives: acc.mean_negatives / b, batches: acc.batches };
        log::info!("ebr epoch {epoch}: loss {:.5}, {:.1} negatives per example", stats.loss, stats.mean_negatives);
        epochs.push(stats);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("tower parameters"));
    }
    Ok(EbrModel { params, items: log.items().to_vec(), epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::ebr::Activation;
    use crate::tensor::grad_check;

    fn tiny_config() -> EbrConfig {
        EbrConfig {
            tower: TowerConfig { d_e: 3, hidden: 4, d_k: 3, seq_cap: 3, activation: Activation::Identity },
            tau: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn examples_use_preceding_history() {
        let spec = SyntheticSpec { num_users: 3, num_items: 20, num_groups: 2, subgroups_per_group: 1, interactions_per_user: 5, ..Default::default() };
        let d = generate_synthetic(&spec).unwrap();
        let ex = build_examples(&d.log, &d.profiles, 3);
        assert_eq!(ex.len(), d.log.len());
        let seq: Vec<usize> = d.log.sequence(0).iter().map(|&(i, _)| i).collect();
        assert!(ex[0].features.history.is_empty());
        assert_eq!(ex[4].features.history, seq[1..4].to_vec());
        assert_eq!(ex[4].positive, seq[4]);
    }

    #[test]
    fn objective_gradient_with_virtuals() {
        let cfg = tiny_config();
        let params = TowerParams::random(12, &[2], &cfg.tower, &mut RngState::new(3));
        let ex = |u: usize, h: Vec<usize>, p: usize| Example { user: u, features: UserFeatures { history: h, profile: vec![(u % 2) as u32] }, positive: p };
        let batch = Batch {
            examples: vec![ex(0, vec![1, 2], 0), ex(1, vec![], 5), ex(2, vec![3], 7)],
            negatives: vec![
                ExampleNegatives { simple: vec![vec![3, 4, 6], vec![8, 9]], hard: vec![1, 2] },
                ExampleNegatives { simple: vec![vec![0, 11]], hard: vec![10] },
                ExampleNegatives { simple: vec![vec![5, 6, 1]], hard: vec![] },
            ],
            edis_seed: 4,
        };
        let (stats, grads) = ebr_objective(&params, &batch, &cfg).unwrap();
        assert_eq!(stats.simple_virtuals, 5 + 2 + 2 + 5);
        assert_eq!(stats.hard_virtuals, 3);
        let f = |x: &[f64]| ebr_objective(&params.unflatten(x).unwrap(), &batch, &cfg).unwrap().0.loss;
        let err = grad_check(f, &params.flatten(), &grads.flatten(), 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn shared_pool_excludes_own_positive() {
        let cfg = EbrConfig { simple_interpolation: false, hard_interpolation: false, ..tiny_config() };
        let params = TowerParams::random(6, &[], &cfg.tower, &mut RngState::new(1));
        let ex = |p: usize| Example { user: 0, features: UserFeatures { history: vec![], profile: vec![] }, positive: p };
        let batch = Batch {
            examples: vec![ex(0), ex(1)],
            negatives: vec![
                ExampleNegatives { simple: vec![vec![1, 2]], hard: vec![] },
                ExampleNegatives { simple: vec![vec![0, 3, 4]], hard: vec![] },
            ],
            edis_seed: 0,
        };
        // example 0: own 2 + pool {3, 4}; example 1: own 3 + pool {2}
        let (stats, _) = ebr_objective(&params, &batch, &cfg).unwrap();
        assert_eq!(stats.mean_negatives, (4.0 + 4.0) / 2.0);
    }

    #[test]
    fn baseline_negatives_are_not_interpolated() {
        let cfg = EbrConfig { strategy: NegativeStrategy::Uniform, ..tiny_config() };
        let params = TowerParams::random(8, &[], &cfg.tower, &mut RngState::new(2));
        let batch = Batch {
            examples: vec![Example { user: 0, features: UserFeatures { history: vec![], profile: vec![] }, positive: 0 }],
            negatives: vec![ExampleNegatives { simple: vec![vec![1, 2, 3, 4]], hard: vec![] }],
            edis_seed: 1,
        };
        let (stats, _) = ebr_objective(&params, &batch, &cfg).unwrap();
        assert_eq!((stats.simple_virtuals, stats.hard_virtuals), (0, 0));
        assert_eq!(stats.mean_negatives, 4.0);
    }

    fn dataset() -> (InteractionLog, ProfileTable) {
        let spec = SyntheticSpec {
            num_users: 60,
            num_items: 80,
            num_groups: 4,
            subgroups_per_group: 2,
            interactions_per_user: 8,
            ..Default::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        (d.log, d.profiles)
    }

    #[test]
    fn zero_epochs_is_initialization_and_runs_repeat() {
        let (log, profiles) = dataset();
        let cfg = EbrConfig { strategy: NegativeStrategy::Uniform, epochs: 0, tower: TowerConfig { d_e: 8, hidden: 8, d_k: 8, ..Default::default() }, ..Default::default() };
        let m = train_ebr(&log, &profiles, None, &cfg).unwrap();
        assert_eq!(m.params, init_params(&log, &profiles, &cfg));
        let cfg = EbrConfig { epochs: 2, ..cfg };
        assert_eq!(train_ebr(&log, &profiles, None, &cfg).unwrap(), train_ebr(&log, &profiles, None, &cfg).unwrap());
    }

    #[test]
    fn esans_requires_index() {
        let (log, profiles) = dataset();
        assert!(train_ebr(&log, &profiles, None, &EbrConfig::default()).is_err());
        let bad = EbrConfig { tau: -1.0, ..Default::default() };
        assert!(bad.violations().iter().any(|(k, _)| k == "tau"));
    }
}
