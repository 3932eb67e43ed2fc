//! Cascaded codebook quantization: primary codewords over the fused view,
//! secondary codewords over the concatenated per-view residuals.

use serde::{Deserialize, Serialize};

use super::align::{ProjectedModalities, VIEWS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{nearest, sq_dist, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookLevel {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T = f64> {
    pub(crate) codewords: DenseMatrix<T>,
    pub(crate) level: CodebookLevel,
}

impl<T: Scalar> Codebook<T> {
    /// Requires at least two codewords, all finite and pairwise distinct.
    pub fn new(codewords: DenseMatrix<T>, level: CodebookLevel) -> Result<Self> {
        if codewords.rows() < 2 {
            return Err(Error::InvalidArg("codebook needs at least 2 codewords".into()));
        }
        if !codewords.is_finite() {
            return Err(Error::NonFinite("codebook"));
        }
        for i in 0..codewords.rows() {
            for j in (i + 1)..codewords.rows() {
                if sq_dist(codewords.row(i), codewords.row(j)).to_f64_lossy().sqrt() <= 1e-9 {
                    return Err(Error::InvalidArg(format!("codewords {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { codewords, level })
    }

    pub fn codewords(&self) -> &DenseMatrix<T> {
        &self.codewords
    }

    pub(crate) fn codewords_mut(&mut self) -> &mut DenseMatrix<T> {
        &mut self.codewords
    }

    pub fn level(&self) -> CodebookLevel {
        self.level
    }

    pub fn len(&self) -> usize {
        self.codewords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.rows() == 0
    }

    pub fn code_dim(&self) -> usize {
        self.codewords.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadedCodebooks<T = f64> {
    /// `K_p × d_m`
    pub primary: Codebook<T>,
    /// `K_s × 3·d_m`
    pub secondary: Codebook<T>,
}

/// `R_p = (M_I + M_T + M_G) / 3`
pub fn fuse_primary<T: Scalar>(m: &ProjectedModalities<T>) -> DenseMatrix<T> {
    let third = T::one() / T::of(VIEWS as f64);
    let mut out = m.views[0].clone();
    for v in &m.views[1..] {
        for (o, &x) in out.as_mut_slice().iter_mut().zip(v.as_slice()) {
            *o += x;
        }
    }
    out.scale(third);
    out
}

/// Nearest codeword per row (Euclidean), ties to the lowest index.
pub fn assign<T: Scalar>(codebook: &Codebook<T>, points: &DenseMatrix<T>) -> Result<Vec<usize>> {
    Error::dims(codebook.code_dim(), points.cols())?;
    Ok(points.iter_rows().map(|p| nearest(&codebook.codewords, p).0).collect())
}

/// `R_s^i = [M_I^i − z^i ; M_T^i − z^i ; M_G^i − z^i]` where `z^i` is row `i`
/// of `primary_codeword_per_item`.
pub fn residual_secondary<T: Scalar>(
    m: &ProjectedModalities<T>,
    primary_codeword_per_item: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    Error::dims(m.rows(), primary_codeword_per_item.rows())?;
    Error::dims(m.dim(), primary_codeword_per_item.cols())?;
    let d = m.dim();
    let mut out = DenseMatrix::zeros(m.rows(), VIEWS * d);
    for i in 0..m.rows() {
        let z = primary_codeword_per_item.row(i);
        let row = out.row_mut(i);
        for (v, view) in m.views.iter().enumerate() {
            for ((o, &x), &c) in row[v * d..(v + 1) * d].iter_mut().zip(view.row(i)).zip(z) {
                *o = x - c;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqLoss<T> {
    pub loss: T,
    /// `∂L/∂R_p`
    pub grad_primary_input: DenseMatrix<T>,
    /// `∂L/∂R_s`
    pub grad_secondary_input: DenseMatrix<T>,
    /// `∂L/∂C_p` from the primary term only (residual paths are added by callers).
    pub grad_primary_codebook: DenseMatrix<T>,
    pub grad_secondary_codebook: DenseMatrix<T>,
}

/// `Σ_i ‖R_p^i − z_p^{a_i}‖² + Σ_i ‖R_s^i − z_s^{b_i}‖²` with assignments held fixed.
pub fn sq_loss<T: Scalar>(
    r_p: &DenseMatrix<T>,
    primary: &Codebook<T>,
    primary_assign: &[usize],
    r_s: &DenseMatrix<T>,
    secondary: &Codebook<T>,
    secondary_assign: &[usize],
) -> Result<SqLoss<T>> {
    Error::dims(r_p.rows(), primary_assign.len())?;
    Error::dims(r_s.rows(), secondary_assign.len())?;
    Error::dims(primary.code_dim(), r_p.cols())?;
    Error::dims(secondary.code_dim(), r_s.cols())?;
    let (p_loss, gp_in, gp_cb) = quantization_term(r_p, primary.codewords(), primary_assign)?;
    let (s_loss, gs_in, gs_cb) = quantization_term(r_s, secondary.codewords(), secondary_assign)?;
    Ok(SqLoss {
        loss: p_loss + s_loss,
        grad_primary_input: gp_in,
        grad_secondary_input: gs_in,
        grad_primary_codebook: gp_cb,
        grad_secondary_codebook: gs_cb,
    })
}

fn quantization_term<T: Scalar>(
    points: &DenseMatrix<T>,
    codewords: &DenseMatrix<T>,
    assign: &[usize],
) -> Result<(T, DenseMatrix<T>, DenseMatrix<T>)> {
    let two = T::of(2.0);
    let mut loss = T::zero();
    let mut g_in = DenseMatrix::zeros(points.rows(), points.cols());
    let mut g_cb = DenseMatrix::zeros(codewords.rows(), codewords.cols());
    for (i, &k) in assign.iter().enumerate() {
        if k >= codewords.rows() {
            return Err(Error::InvalidArg(format!("assignment {k} out of range")));
        }
        let z = codewords.row(k);
        loss += sq_dist(points.row(i), z);
        for (c, ((gi, &x), &zc)) in g_in.row_mut(i).iter_mut().zip(points.row(i)).zip(z).enumerate() {
            *gi = two * (x - zc);
            let cur = g_cb.get(k, c);
            g_cb.set(k, c, cur - *gi);
        }
    }
    Ok((loss, g_in, g_cb))
}
