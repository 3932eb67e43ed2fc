use serde::{Deserialize, Serialize};

use super::align::{pairwise_alignment_loss, AlignmentParams, VIEWS};
use super::quantize::{assign, fuse_primary, residual_secondary, sq_loss, CascadedCodebooks, Codebook, CodebookLevel};
use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::{kmeans, nearest, KMeansParams, RngState};
use crate::Matrix;

/// View pairs of the three alignment terms, weighted by `betas` in this order.
pub const ALIGN_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (2, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsacConfig {
    pub d_m: usize,
    pub k_p: usize,
    pub k_s: usize,
    /// Weights of the image-text, image-behavior and behavior-text alignment terms.
    pub betas: [f64; 3],
    pub tau_align: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for MsacConfig {
    fn default() -> Self {
        Self {
            d_m: 512,
            k_p: 300,
            k_s: 15,
            betas: [2.0; 3],
            tau_align: 0.1,
            learning_rate: 0.0002,
            batch_size: 512,
            epochs: 10,
            kmeans_restarts: 10,
            seed: 17,
        }
    }
}

impl MsacConfig {
    /// `(key, message)` for every violated invariant.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.d_m == 0 {
            out.push(("d_m", "must be positive".into()));
        }
        if self.k_p < 2 {
            out.push(("k_p", "must be at least 2".into()));
        }
        if self.k_s < 2 {
            out.push(("k_s", "must be at least 2".into()));
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            out.push(("betas", "every beta must be positive".into()));
        }
        if !(self.tau_align.is_finite() && self.tau_align > 0.0) {
            out.push(("tau_align", "must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(("learning_rate", "must be positive".into()));
        }
        if self.batch_size < 2 {
            out.push(("batch_size", "must be at least 2".into()));
        }
        if self.kmeans_restarts == 0 {
            out.push(("kmeans_restarts", "must be at least 1".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::InvalidArg(format!("msac.{k} {m}"))),
        }
    }
}

/// Inputs of all items in canonical (sorted id) order, rows L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MsacInputs {
    pub items: Vec<String>,
    pub views: [Matrix; VIEWS],
}

impl MsacInputs {
    /// Aligns the three tables on the sorted item ids of the first one.
    pub fn prepare<T: Scalar>(tables: [&EmbeddingTable<T>; VIEWS]) -> Result<Self> {
        let mut items = tables[0].item_order().to_vec();
        items.sort();
        for t in &tables[1..] {
            if t.len() != items.len() {
                return Err(Error::ManifestMismatch { manifest: items.len(), rows: t.len() });
            }
        }
        let views = tables.map(|t| {
            t.aligned_to(&items).map(|a| {
                let mut m = a.matrix().cast::<f64>();
                m.l2_normalize_rows();
                m
            })
        });
        let [a, b, c] = views;
        Ok(Self { items, views: [a?, b?, c?] })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn input_dims(&self) -> [usize; VIEWS] {
        [self.views[0].cols(), self.views[1].cols(), self.views[2].cols()]
    }

    pub fn select(&self, rows: &[usize]) -> [Matrix; VIEWS] {
        [self.views[0].select_rows(rows), self.views[1].select_rows(rows), self.views[2].select_rows(rows)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MsacLoss {
    /// Alignment terms in [`ALIGN_PAIRS`] order, unweighted.
    pub align: [f64; 3],
    pub sq: f64,
    pub total: f64,
}

/// Gradients of the MSAC objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MsacGrads {
    pub params: AlignmentParams<f64>,
    pub primary: Matrix,
    pub secondary: Matrix,
}

/// Flattens parameters in the order `W_I, W_T, W_G, b_I, b_T, b_G, C_p, C_s`.
pub fn flatten(params: &AlignmentParams<f64>, primary: &Matrix, secondary: &Matrix) -> Vec<f64> {
    let mut out = Vec::new();
    for w in &params.weights {
        out.extend_from_slice(w.as_slice());
    }
    for b in &params.biases {
        out.extend_from_slice(b);
    }
    out.extend_from_slice(primary.as_slice());
    out.extend_from_slice(secondary.as_slice());
    out
}

/// Inverse of [`flatten`], using `like` for shapes.
pub fn unflatten(flat: &[f64], like: &AlignmentParams<f64>, codebooks: &CascadedCodebooks<f64>) -> Result<(AlignmentParams<f64>, Matrix, Matrix)> {
    let mut params = like.clone();
    let mut at = 0;
    let mut take = |dst: &mut [f64]| {
        dst.copy_from_slice(&flat[at..at + dst.len()]);
        at += dst.len();
    };
    for w in &mut params.weights {
        take(w.as_mut_slice());
    }
    for b in &mut params.biases {
        take(b);
    }
    let mut p = codebooks.primary.codewords().clone();
    let mut s = codebooks.secondary.codewords().clone();
    take(p.as_mut_slice());
    take(s.as_mut_slice());
    Error::dims(flat.len(), at)?;
    Ok((params, p, s))
}

/// Primary and secondary assignments of a batch.
pub type Assignments = (Vec<usize>, Vec<usize>);

/// `Σ β·L_align + L_SQ` for one batch, and its gradient with the cluster
/// assignments held fixed. Assignments are recomputed when `fixed` is `None`.
pub fn msac_objective(
    params: &AlignmentParams<f64>,
    primary: &Matrix,
    secondary: &Matrix,
    inputs: [&Matrix; VIEWS],
    config: &MsacConfig,
    fixed: Option<&Assignments>,
) -> Result<(MsacLoss, MsacGrads, Assignments)> {
    let m = params.project(inputs)?;
    let n = m.rows();
    let r_p = fuse_primary(&m);
    let p_cb = Codebook { codewords: primary.clone(), level: CodebookLevel::Primary };
    let s_cb = Codebook { codewords: secondary.clone(), level: CodebookLevel::Secondary };
    let p_assign = match fixed {
        Some((p, _)) => p.clone(),
        None => assign(&p_cb, &r_p)?,
    };
    let z = primary.select_rows(&p_assign);
    let r_s = residual_secondary(&m, &z)?;
    let s_assign = match fixed {
        Some((_, s)) => s.clone(),
        None => assign(&s_cb, &r_s)?,
    };

    let d = m.dim();
    let mut grad_views = [(); VIEWS].map(|_| Matrix::zeros(n, d));
    let mut loss = MsacLoss::default();
    for (t, &(a, b)) in ALIGN_PAIRS.iter().enumerate() {
        let beta = config.betas[t];
        let pl = pairwise_alignment_loss(&m.views[a], &m.views[b], config.tau_align)?;
        loss.align[t] = pl.loss;
        loss.total += beta * pl.loss;
        for (g, &x) in grad_views[a].as_mut_slice().iter_mut().zip(pl.grad_a.as_slice()) {
            *g += beta * x;
        }
        for (g, &x) in grad_views[b].as_mut_slice().iter_mut().zip(pl.grad_b.as_slice()) {
            *g += beta * x;
        }
    }

    let sq = sq_loss(&r_p, &p_cb, &p_assign, &r_s, &s_cb, &s_assign)?;
    loss.sq = sq.loss;
    loss.total += sq.loss;
    let mut grad_primary = sq.grad_primary_codebook;
    let third = 1.0 / VIEWS as f64;
    for i in 0..n {
        let gp = sq.grad_primary_input.row(i);
        let gs = sq.grad_secondary_input.row(i);
        for (v, gv) in grad_views.iter_mut().enumerate() {
            let block = &gs[v * d..(v + 1) * d];
            for ((g, &p), &s) in gv.row_mut(i).iter_mut().zip(gp).zip(block) {
                *g += p * third + s;
            }
            // residual R_s = M − z_p also depends on the primary codeword
            for (c, &s) in block.iter().enumerate() {
                let cur = grad_primary.get(p_assign[i], c);
                grad_primary.set(p_assign[i], c, cur - s);
            }
        }
    }
    let grads = MsacGrads {
        params: params.backward(inputs, [&grad_views[0], &grad_views[1], &grad_views[2]])?,
        primary: grad_primary,
        secondary: sq.grad_secondary_codebook,
    };
    if !loss.total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok((loss, grads, (p_assign, s_assign)))
}

/// Trained alignment parameters and cascaded codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct MsacModel {
    pub params: AlignmentParams<f64>,
    pub codebooks: CascadedCodebooks<f64>,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<MsacLoss>,
}

fn kmeans_codebook(points: &Matrix, k: usize, restarts: usize, level: CodebookLevel, rng: &mut RngState) -> Result<Codebook<f64>> {
    let r = kmeans(points, KMeansParams { k, restarts, max_iter: 50 }, rng)?;
    Ok(Codebook { codewords: r.centroids, level })
}

/// Codebooks from k-means over the fused projections (primary) and their residuals (secondary).
pub fn init_codebooks(params: &AlignmentParams<f64>, inputs: &MsacInputs, config: &MsacConfig, rng: &mut RngState) -> Result<CascadedCodebooks<f64>> {
    let m = params.project([&inputs.views[0], &inputs.views[1], &inputs.views[2]])?;
    let r_p = fuse_primary(&m);
    let primary = kmeans_codebook(&r_p, config.k_p, config.kmeans_restarts, CodebookLevel::Primary, rng)?;
    let p_assign = assign(&primary, &r_p)?;
    let r_s = residual_secondary(&m, &primary.codewords().select_rows(&p_assign))?;
    let secondary = kmeans_codebook(&r_s, config.k_s, config.kmeans_restarts, CodebookLevel::Secondary, rng)?;
    Ok(CascadedCodebooks { primary, secondary })
}

/// Re-seeds every codeword that no item uses to the item with the largest
/// quantization error at that level. Returns the re-seeded rows per level.
fn reseed_dead(params: &AlignmentParams<f64>, inputs: &MsacInputs, codebooks: &mut CascadedCodebooks<f64>) -> Result<[Vec<usize>; 2]> {
    let m = params.project([&inputs.views[0], &inputs.views[1], &inputs.views[2]])?;
    let r_p = fuse_primary(&m);
    let dead_p = reseed_level(&r_p, codebooks.primary.codewords_mut());
    let p_assign = assign(&codebooks.primary, &r_p)?;
    let r_s = residual_secondary(&m, &codebooks.primary.codewords().select_rows(&p_assign))?;
    let dead_s = reseed_level(&r_s, codebooks.secondary.codewords_mut());
    Ok([dead_p, dead_s])
}

fn reseed_level(points: &Matrix, codewords: &mut Matrix) -> Vec<usize> {
    let mut used = vec![false; codewords.rows()];
    let mut err: Vec<f64> = points
        .iter_rows()
        .map(|p| {
            let (k, d) = nearest(codewords, p);
            used[k] = true;
            d
        })
        .collect();
    let dead: Vec<usize> = (0..codewords.rows()).filter(|&k| !used[k]).collect();
    for &k in &dead {
        let far = (0..err.len()).fold(0, |b, i| if err[i] > err[b] { i } else { b });
        codewords.row_mut(k).copy_from_slice(points.row(far));
        err[far] = 0.0;
    }
    dead
}

/// Minimizes `β1·L_IT + β2·L_IG + β3·L_GT + L_SQ` with Adam over mini-batches.
///
/// The frozen modality inputs never change; codebooks start from k-means over
/// the initial projections. With `epochs = 0` the initialization is returned.
pub fn train_msac(inputs: &MsacInputs, config: &MsacConfig) -> Result<MsacModel> {
    config.validate()?;
    let n = inputs.len();
    if n < config.k_p.max(config.k_s) {
        return Err(Error::TooFewPoints { points: n, k: config.k_p.max(config.k_s) });
    }
    let mut rng = RngState::new(config.seed);
    let mut params = AlignmentParams::<f64>::random(inputs.input_dims(), config.d_m, &mut rng);
    let mut codebooks = init_codebooks(&params, inputs, config, &mut rng)?;

    let mut sizes: Vec<usize> = params.weights.iter().map(|w| w.as_slice().len()).collect();
    sizes.extend(params.biases.iter().map(Vec::len));
    sizes.push(codebooks.primary.codewords().as_slice().len());
    sizes.push(codebooks.secondary.codewords().as_slice().len());
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate), &sizes);
    let (p_cols, s_cols) = (codebooks.primary.code_dim(), codebooks.secondary.code_dim());

    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut sum = MsacLoss::default();
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size).filter(|c| c.len() >= 2) {
            let batch = inputs.select(chunk);
            let (loss, grads, _) = msac_objective(
                &params,
                codebooks.primary.codewords(),
                codebooks.secondary.codewords(),
                [&batch[0], &batch[1], &batch[2]],
                config,
                None,
            )?;
            for t in 0..3 {
                sum.align[t] += loss.align[t];
            }
            sum.sq += loss.sq;
            sum.total += loss.total;
            batches += 1;

            let [w0, w1, w2] = &mut params.weights;
            let [b0, b1, b2] = &mut params.biases;
            let (cp, cs) = (&mut codebooks.primary.codewords, &mut codebooks.secondary.codewords);
            adam.step(
                &mut [
                    w0.as_mut_slice(),
                    w1.as_mut_slice(),
                    w2.as_mut_slice(),
                    b0,
                    b1,
                    b2,
                    cp.as_mut_slice(),
                    cs.as_mut_slice(),
                ],
                &[
                    grads.params.weights[0].as_slice(),
                    grads.params.weights[1].as_slice(),
                    grads.params.weights[2].as_slice(),
                    &grads.params.biases[0],
                    &grads.params.biases[1],
                    &grads.params.biases[2],
                    grads.primary.as_slice(),
                    grads.secondary.as_slice(),
                ],
            );
        }
        let [dead_p, dead_s] = reseed_dead(&params, inputs, &mut codebooks)?;
        adam.reset_rows(6, p_cols, &dead_p);
        adam.reset_rows(7, s_cols, &dead_s);
        let b = batches.max(1) as f64;
        let mean = MsacLoss { align: sum.align.map(|x| x / b), sq: sum.sq / b, total: sum.total / b };
        log::info!(
            "msac epoch {epoch}: total {:.5} align {:.4}/{:.4}/{:.4} sq {:.5} reseeded {}+{}",
            mean.total,
            mean.align[0],
            mean.align[1],
            mean.align[2],
            mean.sq,
            dead_p.len(),
            dead_s.len()
        );
        epoch_losses.push(mean);
    }
    Ok(MsacModel { params, codebooks, epoch_losses })
}
