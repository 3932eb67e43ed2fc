//! Virtual negatives interpolated inside sampled clusters and between a
//! positive and its hard negatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{cosine_with_grad, RngState};

/// Similarities below this are floored before raising to `η`.
const MIN_SIM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpolationConfig {
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        Self { eta: 0.6, lambda: 0.1, seed: 29 }
    }
}

impl InterpolationConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !self.eta.is_finite() {
            out.push(("eta", "must be finite".into()));
        }
        if !(self.lambda.is_finite() && self.lambda < 1.0) {
            out.push(("lambda", "must be finite and below 1".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::InvalidArg(format!("edis.{k} {m}"))),
        }
    }
}

/// `2 + 3 + … + m_o`
pub fn virtual_count(m_o: usize) -> Result<usize> {
    if m_o < 2 {
        return Err(Error::InvalidArg(format!("m_o = {m_o}, need at least 2")));
    }
    Ok(m_o * (m_o + 1) / 2 - 1)
}

/// One interpolated vector and where it came from. Indices refer to positions
/// in the embedding list passed to [`interpolate_simple`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualMix<T = f64> {
    pub anchor: usize,
    pub participants: Vec<usize>,
    /// Convex weights, aligned with `participants`.
    pub weights: Vec<T>,
    pub vector: Vec<T>,
}

fn sim_weights<T: Scalar>(anchor: usize, vs: &[&[T]], eta: T) -> Result<Vec<T>> {
    let floor = T::of(MIN_SIM);
    let mut w = Vec::with_capacity(vs.len());
    for (k, o) in vs.iter().enumerate() {
        let s = if k == anchor {
            T::one()
        } else {
            match cosine_with_grad(vs[anchor], o) {
                Ok((c, _, _)) => ((c.max(-T::one()).min(T::one()) + T::one()) * T::half()).max(floor),
                // a zero vector has no direction; treat it as orthogonal
                Err(Error::ZeroNormVector) => T::half(),
                Err(e) => return Err(e),
            }
        };
        w.push(s.powf(eta));
    }
    let total: T = w.iter().copied().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Permutes the embeddings once; for each prefix of length `n_o = 2..=m_o` and
/// each anchor in it, emits `Σ α_i v^i` with `α_i ∝ s(v^a, v^i)^η` where `s` is
/// the normalized similarity. Emits [`virtual_count`] vectors.
pub fn interpolate_simple<T: Scalar>(embeddings: &[&[T]], eta: T, rng: &mut RngState) -> Result<Vec<VirtualMix<T>>> {
    let m_o = embeddings.len();
    let count = virtual_count(m_o)?;
    let dim = embeddings[0].len();
    for e in embeddings {
        Error::dims(dim, e.len())?;
    }
    let mut order: Vec<usize> = (0..m_o).collect();
    rng.shuffle(&mut order);
    let mut out = Vec::with_capacity(count);
    for n_o in 2..=m_o {
        let participants = &order[..n_o];
        let vs: Vec<&[T]> = participants.iter().map(|&i| embeddings[i]).collect();
        for (k, &a) in participants.iter().enumerate() {
            let weights = sim_weights(k, &vs, eta)?;
            let mut vector = vec![T::zero(); dim];
            for (v, &w) in vs.iter().zip(&weights) {
                for (o, &x) in vector.iter_mut().zip(v.iter()) {
                    *o += w * x;
                }
            }
            out.push(VirtualMix { anchor: a, participants: participants.to_vec(), weights, vector });
        }
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

/// Accumulates `∂L/∂v^i` into `grads` given `grad = ∂L/∂ṽ` for one mix,
/// including the path through the similarity weights.
pub fn simple_virtual_backward(embeddings: &[&[f64]], mix: &VirtualMix<f64>, eta: f64, grad: &[f64], grads: &mut [Vec<f64>]) -> Result<()> {
    let a = mix.anchor;
    let c: Vec<f64> = mix.participants.iter().map(|&i| crate::tensor::dot(grad, embeddings[i])).collect();
    let mean_c: f64 = mix.weights.iter().zip(&c).map(|(w, c)| w * c).sum();
    for (k, &i) in mix.participants.iter().enumerate() {
        let alpha = mix.weights[k];
        for (g, &x) in grads[i].iter_mut().zip(grad) {
            *g += alpha * x;
        }
        if i == a {
            continue;
        }
        // α_k = w_k / W, w_k = s_k^η: ∂L/∂ln w_k = α_k (c_k − Σ α c)
        let (cos, da, db) = match cosine_with_grad(embeddings[a], embeddings[i]) {
            Ok(v) => v,
            Err(Error::ZeroNormVector) => continue,
            Err(e) => return Err(e),
        };
        let s = (cos.clamp(-1.0, 1.0) + 1.0) / 2.0;
        if s <= MIN_SIM {
            continue;
        }
        let d_cos = alpha * (c[k] - mean_c) * eta / s * 0.5;
        for (g, d) in grads[a].iter_mut().zip(&da) {
            *g += d_cos * d;
        }
        for (g, d) in grads[i].iter_mut().zip(&db) {
            *g += d_cos * d;
        }
    }
    Ok(())
}

/// `λ·v_+ + (1−λ)·v_h` for every hard embedding.
pub fn interpolate_hard<T: Scalar>(v_pos: &[T], hard: &[&[T]], lambda: T) -> Result<Vec<Vec<T>>> {
    hard.iter()
        .map(|h| {
            Error::dims(v_pos.len(), h.len())?;
            Ok(v_pos.iter().zip(h.iter()).map(|(&p, &x)| lambda * p + (T::one() - lambda) * x).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::tensor::{grad_check, norm};

    #[test]
    fn count_examples() {
        assert_eq!(virtual_count(2).unwrap(), 2);
        assert_eq!(virtual_count(3).unwrap(), 5);
        assert_eq!(virtual_count(5).unwrap(), 14);
        assert!(virtual_count(1).is_err());
        for m in 2..=10 {
            assert_eq!(virtual_count(m).unwrap(), (2..=m).sum::<usize>());
        }
    }

    #[test]
    fn two_point_example() {
        let (v1, v2) = ([1.0f64, 0.0], [0.0f64, 1.0]);
        let mixes = interpolate_simple(&[&v1[..], &v2[..]], 1.0, &mut RngState::new(0)).unwrap();
        let m = mixes.iter().find(|m| m.anchor == 0).unwrap();
        let w0 = m.weights[m.participants.iter().position(|&p| p == 0).unwrap()];
        assert!((w0 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.vector[0] - 2.0 / 3.0).abs() < 1e-15 && (m.vector[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_and_eta_zero() {
        let v = [0.3f64, -1.2, 2.0];
        let same = [&v[..]; 4];
        for m in interpolate_simple(&same, 0.6, &mut RngState::new(1)).unwrap() {
            for (a, b) in m.vector.iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let vs = [[1.0f64, 2.0], [3.0, -1.0], [-2.0, 0.5], [0.1, 0.1]];
        let refs: Vec<&[f64]> = vs.iter().map(|v| &v[..]).collect();
        for m in interpolate_simple(&refs, 0.0, &mut RngState::new(2)).unwrap() {
            let n = m.participants.len() as f64;
            for c in 0..2 {
                let mean = m.participants.iter().map(|&i| vs[i][c]).sum::<f64>() / n;
                assert!((m.vector[c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prefixes_nest_and_anchors_cover() {
        let vs: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0 + i as f64, (i * i) as f64 - 3.0]).collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| &v[..]).collect();
        let mixes = interpolate_simple(&refs, 0.6, &mut RngState::new(3)).unwrap();
        assert_eq!(mixes.len(), 14);
        let longest = &mixes.last().unwrap().participants;
        let mut at = 0;
        for n in 2..=5 {
            for m in &mixes[at..at + n] {
                assert_eq!(&m.participants[..], &longest[..n]);
                assert!(m.participants.contains(&m.anchor));
            }
            at += n;
        }
    }

    #[test]
    fn hard_examples() {
        let (p, h) = ([1.0f64, 0.0], [0.0f64, 1.0]);
        assert_eq!(interpolate_hard(&p, &[&h[..]], 0.0).unwrap()[0], vec![0.0, 1.0]);
        let v = &interpolate_hard(&p, &[&h[..]], 0.1).unwrap()[0];
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[1] - 0.9).abs() < 1e-15);
        let v = &interpolate_hard(&p, &[&h[..]], -0.1).unwrap()[0];
        assert!((v[0] + 0.1).abs() < 1e-15 && (v[1] - 1.1).abs() < 1e-15);
        let dist = |x: &[f64]| ((x[0] - 1.0).powi(2) + x[1].powi(2)).sqrt();
        assert!(dist(v) > dist(&h));
        assert!(interpolate_hard(&p, &[&[1.0][..]], 0.1).is_err());
    }

    #[test]
    fn zero_vector_counts_as_orthogonal() {
        let (a, z) = ([1.0f64, 0.0], [0.0f64, 0.0]);
        let mixes = interpolate_simple(&[&a[..], &z[..]], 1.0, &mut RngState::new(1)).unwrap();
        let from_a = mixes.iter().find(|m| m.participants[m.weights.iter().position(|&w| w > 0.5).unwrap()] == 0).unwrap();
        let k = from_a.participants.iter().position(|&i| i == 0).unwrap();
        assert!((from_a.weights[k] - 1.0 / 1.5).abs() < 1e-12);
        let mut grads = vec![vec![0.0; 2]; 2];
        for m in &mixes {
            simple_virtual_backward(&[&a[..], &z[..]], m, 1.0, &[1.0, 1.0], &mut grads).unwrap();
        }
        assert!(grads.iter().flatten().all(|g| g.is_finite()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngState::new(4);
        let (m_o, d) = (4, 3);
        let flat: Vec<f64> = (0..m_o * d).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let eta = 0.6;
        let eval = |x: &[f64]| {
            let refs: Vec<&[f64]> = x.chunks(d).collect();
            interpolate_simple(&refs, eta, &mut RngState::new(8)).unwrap()
        };
        let mixes = eval(&flat);
        let refs: Vec<&[f64]> = flat.chunks(d).collect();
        let mut grads = vec![vec![0.0; d]; m_o];
        for m in &mixes {
            simple_virtual_backward(&refs, m, eta, &g, &mut grads).unwrap();
        }
        let analytic: Vec<f64> = grads.concat();
        let f = |x: &[f64]| eval(x).iter().map(|m| crate::tensor::dot(&m.vector, &g)).sum::<f64>();
        assert!(grad_check(f, &flat, &analytic, 1e-6).unwrap() < 1e-6);
    }

    fn vectors(m: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), m)
            .prop_filter("nonzero", |vs| vs.iter().all(|v| norm(v) > 1e-2))
    }

    proptest! {
        #[test]
        fn weights_convex_and_anchor_dominant(vs in vectors(6, 3), eta in 0.05f64..3.0, seed in 0u64..100) {
            let refs: Vec<&[f64]> = vs.iter().map(|v| &v[..]).collect();
            let mixes = interpolate_simple(&refs, eta, &mut RngState::new(seed)).unwrap();
            prop_assert_eq!(mixes.len(), virtual_count(6).unwrap());
            for m in &mixes {
                prop_assert!(m.weights.iter().all(|&w| w >= 0.0));
                prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let a = m.participants.iter().position(|&p| p == m.anchor).unwrap();
                for &w in &m.weights {
                    prop_assert!(w <= m.weights[a] + 1e-15);
                }
            }
        }

        #[test]
        fn count_law(m in 2usize..=10, seed in 0u64..50) {
            let vs: Vec<Vec<f64>> = (0..m).map(|i| vec![1.0, i as f64]).collect();
            let refs: Vec<&[f64]> = vs.iter().map(|v| &v[..]).collect();
            prop_assert_eq!(interpolate_simple(&refs, 0.6, &mut RngState::new(seed)).unwrap().len(), virtual_count(m).unwrap());
        }

        #[test]
        fn larger_lambda_is_closer(p in vectors(1, 3), h in vectors(1, 3), l1 in 0.01f64..0.98, dl in 0.001f64..0.5) {
            let l2 = (l1 + dl).min(0.999);
            prop_assume!(l2 > l1);
            let gap: f64 = p[0].iter().zip(&h[0]).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assume!(gap > 1e-6);
            let d = |l: f64| {
                let v = &interpolate_hard(&p[0], &[&h[0][..]], l).unwrap()[0];
                v.iter().zip(&p[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            };
            prop_assert!(d(l2) < d(l1));
        }
    }
}
