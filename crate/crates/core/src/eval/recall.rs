use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{EvalSet, InteractionLog, ProfileTable};
use crate::ebr::{user_features, TowerParams};
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 2] = [50, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub ks: Vec<usize>,
    /// Mean recall over users, one value per entry of `ks`.
    pub recall: Vec<f64>,
    pub users: usize,
    pub seed: u64,
    pub config_digest: String,
}

impl RecallReport {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }
}

/// Indices of the `k` largest scores among `candidates`, best first, ties to the lower index.
pub fn top_k(scores: &[f64], candidates: impl IntoIterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut c: Vec<usize> = candidates.into_iter().collect();
    let cmp = |a: &usize, b: &usize| scores[*b].partial_cmp(&scores[*a]).unwrap_or(Ordering::Equal).then(a.cmp(b));
    if k < c.len() {
        c.select_nth_unstable_by(k, cmp);
        c.truncate(k);
    }
    c.sort_by(cmp);
    c
}

/// Per-user recall of the held-out items from the top-K over items absent from
/// the user's training sequence.
pub fn user_recalls(scores: &[f64], train_items: &BTreeSet<usize>, truth: &[usize], ks: &[usize]) -> Vec<f64> {
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let ranked = top_k(scores, (0..scores.len()).filter(|i| !train_items.contains(i)), kmax);
    ks.iter()
        .map(|&k| ranked.iter().take(k).filter(|i| truth.contains(i)).count() as f64 / truth.len() as f64)
        .collect()
}

/// Brute-force Recall@K of a two-tower model. `train_log` supplies both the
/// user histories fed to the user tower and the items excluded from ranking.
pub fn recall_at_k(params: &TowerParams, train_log: &InteractionLog, eval: &EvalSet, profiles: &ProfileTable, seq_cap: usize, ks: &[usize]) -> Result<Vec<f64>> {
    let users: Vec<_> = eval.users.iter().filter(|(_, truth)| !truth.is_empty()).collect();
    if users.is_empty() {
        return Err(Error::EmptyEval);
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArg("K values must be positive".into()));
    }
    Error::dims(train_log.num_items(), params.num_items())?;
    let items = params.encode_all_items()?;
    let mut total = vec![0.0; ks.len()];
    for (u, truth) in &users {
        let seq: Vec<usize> = train_log.sequence(*u).iter().map(|&(i, _)| i).collect();
        let features = user_features(&seq, profiles, &train_log.users()[*u], seq_cap);
        let v = params.encode_user(&features)?;
        let scores: Vec<f64> = items.iter_rows().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let train: BTreeSet<usize> = seq.into_iter().collect();
        for (t, r) in total.iter_mut().zip(user_recalls(&scores, &train, truth, ks)) {
            *t += r;
        }
    }
    Ok(total.into_iter().map(|t| t / users.len() as f64).collect())
}

/// [`recall_at_k`] wrapped with run metadata.
pub fn recall_report(
    params: &TowerParams,
    train_log: &InteractionLog,
    eval: &EvalSet,
    profiles: &ProfileTable,
    seq_cap: usize,
    ks: &[usize],
    seed: u64,
    config_digest: &str,
) -> Result<RecallReport> {
    let recall = recall_at_k(params, train_log, eval, profiles, seq_cap, ks)?;
    let users = eval.users.iter().filter(|(_, t)| !t.is_empty()).count();
    Ok(RecallReport { ks: ks.to_vec(), recall, users, seed, config_digest: config_digest.to_string() })
}
