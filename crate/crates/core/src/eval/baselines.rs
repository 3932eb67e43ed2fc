use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;

use crate::error::{Error, Result};
use crate::tensor::RngState;

/// `n` distinct items drawn uniformly from `0..universe` without `positive`.
pub fn uns_sampler(universe: usize, positive: usize, n: usize, rng: &mut RngState) -> Vec<usize> {
    let others = universe.saturating_sub(usize::from(positive < universe));
    rng.choose_distinct(others, n)
        .into_iter()
        .map(|j| if positive < universe && j >= positive { j + 1 } else { j })
        .collect()
}

/// Draws without replacement with probability proportional to `count^exponent`.
#[derive(Debug, Clone)]
pub struct PopularitySampler {
    weights: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl PopularitySampler {
    pub fn new(counts: &[u64], exponent: f64) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(exponent) }).collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::AllZeroPopularity)?;
        Ok(Self { weights, dist })
    }

    pub fn probability(&self, item: usize) -> f64 {
        self.weights[item] / self.weights.iter().sum::<f64>()
    }

    /// Up to `n` distinct items other than `positive`. Rejection from the full
    /// distribution gives the same law as sequential renormalized draws.
    pub fn sample(&self, positive: usize, n: usize, rng: &mut RngState) -> Vec<usize> {
        let eligible = self.weights.iter().enumerate().filter(|&(i, &w)| i != positive && w > 0.0).count();
        let n = n.min(eligible);
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let j = rng.sample(&self.dist);
            if j != positive && seen.insert(j) {
                out.push(j);
            }
        }
        out
    }
}

/// Convenience form of [`PopularitySampler::sample`].
pub fn pns_sampler(counts: &[u64], positive: usize, n: usize, exponent: f64, rng: &mut RngState) -> Result<Vec<usize>> {
    Ok(PopularitySampler::new(counts, exponent)?.sample(positive, n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uns_exhaustive_and_deterministic() {
        let mut got = uns_sampler(10, 4, 9, &mut RngState::new(1));
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3, 5, 6, 7, 8, 9]);
        assert_eq!(uns_sampler(50, 3, 10, &mut RngState::new(2)), uns_sampler(50, 3, 10, &mut RngState::new(2)));
    }

    #[test]
    fn uns_frequencies_within_three_sigma() {
        let (universe, draws) = (20, 100_000);
        let mut counts = vec![0usize; universe];
        let mut rng = RngState::new(3);
        for _ in 0..draws {
            counts[uns_sampler(universe, 0, 1, &mut rng)[0]] += 1;
        }
        assert_eq!(counts[0], 0);
        let p = 1.0 / (universe - 1) as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{c}");
        }
    }

    #[test]
    fn pns_odds_follow_exponent() {
        // 16^0.75 = 8
        let s = PopularitySampler::new(&[16, 1, 5], 0.75).unwrap();
        let mut rng = RngState::new(4);
        let (mut a, mut b) = (0usize, 0usize);
        for _ in 0..90_000 {
            match s.sample(2, 1, &mut rng)[0] {
                0 => a += 1,
                _ => b += 1,
            }
        }
        let odds = a as f64 / b as f64;
        assert!((odds - 8.0).abs() < 0.3, "{odds}");
    }

    #[test]
    fn pns_zero_mass_and_errors() {
        let s = PopularitySampler::new(&[0, 3, 3, 3], 0.75).unwrap();
        let mut rng = RngState::new(5);
        for _ in 0..1000 {
            assert!(!s.sample(1, 2, &mut rng).contains(&0));
        }
        assert_eq!(s.sample(1, 5, &mut rng).len(), 2);
        assert!(matches!(PopularitySampler::new(&[0, 0], 0.75), Err(Error::AllZeroPopularity)));
    }

    #[test]
    fn pns_uniform_counts_match_uns_law() {
        let s = PopularitySampler::new(&[7; 5], 0.75).unwrap();
        for i in 0..5 {
            assert!((s.probability(i) - 0.2).abs() < 1e-15);
        }
    }
}
