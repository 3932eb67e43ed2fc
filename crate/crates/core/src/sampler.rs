//! Cluster-aware negative sampling over a [`SemanticIndex`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msac::SemanticIndex;
use crate::tensor::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Primary clusters drawn per positive.
    pub m_c: usize,
    /// Items drawn per cluster.
    pub m_o: usize,
    /// Hard negatives per positive.
    pub m_h: usize,
    pub gamma: f64,
    pub epsilon_d: f64,
    /// Drop hard candidates that share the positive's secondary cell. Turning
    /// this off keeps every other member of the primary cluster.
    pub use_secondary: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { m_c: 2, m_o: 5, m_h: 5, gamma: 1.0, epsilon_d: 1e-6, use_secondary: true, seed: 23 }
    }
}

impl SamplerConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.m_c == 0 {
            out.push(("m_c", "must be at least 1".into()));
        }
        if self.m_o < 2 {
            out.push(("m_o", "must be at least 2".into()));
        }
        if !self.gamma.is_finite() {
            out.push(("gamma", "must be finite".into()));
        }
        if !(self.epsilon_d.is_finite() && self.epsilon_d > 0.0) {
            out.push(("epsilon_d", "must be positive".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::InvalidArg(format!("sampler.{k} {m}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleGroup {
    pub cluster: usize,
    /// Item indices into the index's item list.
    pub items: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeDraw {
    pub positive: usize,
    pub simple: Vec<SimpleGroup>,
    pub hard: Vec<usize>,
}

impl NegativeDraw {
    /// Every real negative, simple groups first.
    pub fn all_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.simple.iter().flat_map(|g| g.items.iter().copied()).chain(self.hard.iter().copied())
    }
}

/// `P_i ∝ 1 / max(D[i][c], ε)^γ` over non-empty clusters other than `c`; zero elsewhere.
pub fn cluster_distribution(index: &SemanticIndex, positive_cp: usize, gamma: f64, epsilon_d: f64) -> Result<Vec<f64>> {
    let k = index.k_p();
    if positive_cp >= k {
        return Err(Error::InvalidArg(format!("cluster {positive_cp} out of range")));
    }
    let eligible: Vec<usize> = (0..k).filter(|&i| i != positive_cp && !index.members(i).is_empty()).collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleClusters { needed: 1, available: 0 });
    }
    // computed in log space so large γ cannot overflow
    let log_q: Vec<f64> = eligible
        .iter()
        .map(|&i| -gamma * index.distances().get(i, positive_cp).max(epsilon_d).ln())
        .collect();
    let top = log_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q: Vec<f64> = log_q.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = q.iter().sum();
    let mut p = vec![0.0; k];
    for (&i, qi) in eligible.iter().zip(q) {
        p[i] = qi / total;
    }
    Ok(p)
}

/// `m_c` distinct clusters drawn by [`cluster_distribution`], then up to `m_o`
/// distinct members of each, uniformly.
pub fn sample_simple(index: &SemanticIndex, positive: usize, config: &SamplerConfig, rng: &mut RngState) -> Result<Vec<SimpleGroup>> {
    let mut p = cluster_distribution(index, index.primary(positive), config.gamma, config.epsilon_d)?;
    let available = p.iter().filter(|&&x| x > 0.0).count();
    if available < config.m_c {
        return Err(Error::NoEligibleClusters { needed: config.m_c, available });
    }
    let mut groups = Vec::with_capacity(config.m_c);
    for _ in 0..config.m_c {
        let cluster = rng.weighted(&p).ok_or(Error::NoEligibleClusters { needed: config.m_c, available })?;
        p[cluster] = 0.0;
        let members = index.members(cluster);
        let items = rng.choose_distinct(members.len(), config.m_o).into_iter().map(|j| members[j]).collect();
        groups.push(SimpleGroup { cluster, items });
    }
    Ok(groups)
}

/// Items sharing the positive's primary cluster but not its secondary cell.
pub fn hard_pool(index: &SemanticIndex, positive: usize) -> Vec<usize> {
    let (cp, cs) = (index.primary(positive), index.secondary(positive));
    index.members(cp).iter().copied().filter(|&j| index.secondary(j) != cs).collect()
}

/// Up to `m_h` distinct items of [`hard_pool`], uniformly. May be empty.
pub fn sample_hard(index: &SemanticIndex, positive: usize, config: &SamplerConfig, rng: &mut RngState) -> Vec<usize> {
    if config.m_h == 0 {
        return Vec::new();
    }
    let pool = if config.use_secondary {
        hard_pool(index, positive)
    } else {
        index.members(index.primary(positive)).iter().copied().filter(|&j| j != positive).collect()
    };
    rng.choose_distinct(pool.len(), config.m_h).into_iter().map(|j| pool[j]).collect()
}

/// Simple groups and hard negatives for one positive.
pub fn draw_negatives(index: &SemanticIndex, positive: usize, config: &SamplerConfig, rng: &mut RngState) -> Result<NegativeDraw> {
    let simple = sample_simple(index, positive, config, rng)?;
    let hard = sample_hard(index, positive, config, rng);
    if hard.is_empty() && config.m_h > 0 {
        log::debug!("no hard negatives for item {positive}");
    }
    Ok(NegativeDraw { positive, simple, hard })
}
