use crate::error::{Error, Result};
use crate::tensor::dot;
use crate::Matrix;

/// Loss and gradients of [`infonce_indexed`].
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedInfoNce {
    pub loss: f64,
    pub grad_users: Matrix,
    pub grad_candidates: Matrix,
}

/// InfoNCE where positives and negatives are rows of one shared candidate matrix.
///
/// `L = −(1/N) Σ_i [z_i⁺ − logsumexp(z_i⁺, z_i¹⁻, …)]` with `z = uᵀv / τ`.
/// Candidates may be referenced any number of times.
pub fn infonce_indexed(users: &Matrix, candidates: &Matrix, positives: &[usize], negatives: &[Vec<usize>], tau: f64) -> Result<IndexedInfoNce> {
    let n = users.rows();
    Error::dims(n, positives.len())?;
    Error::dims(n, negatives.len())?;
    Error::dims(users.cols(), candidates.cols())?;
    if !(tau > 0.0) || n == 0 {
        return Err(Error::InvalidArg("infonce needs tau > 0 and at least one example".into()));
    }
    let c = candidates.rows();
    for &j in positives.iter().chain(negatives.iter().flatten()) {
        if j >= c {
            return Err(Error::InvalidArg(format!("candidate {j} out of range")));
        }
    }
    let d = users.cols();
    let mut grad_users = Matrix::zeros(n, d);
    let mut grad_candidates = Matrix::zeros(c, d);
    let inv_n = 1.0 / n as f64;
    let scale = inv_n / tau;
    let mut loss = 0.0;
    let mut z = Vec::new();
    let mut g = Vec::new();
    for i in 0..n {
        let u = users.row(i);
        let refs = || std::iter::once(positives[i]).chain(negatives[i].iter().copied());
        z.clear();
        z.extend(refs().map(|j| dot(u, candidates.row(j)) / tau));
        let (arg, top) = z.iter().cloned().enumerate().fold((0, f64::NEG_INFINITY), |a, (k, x)| if x > a.1 { (k, x) } else { a });
        let rest: f64 = z.iter().enumerate().filter(|&(k, _)| k != arg).map(|(_, &x)| (x - top).exp()).sum();
        let tail = rest.ln_1p();
        let lse = top + tail;
        loss += ((top - z[0]) + tail) * inv_n;
        g.clear();
        g.extend(z.iter().map(|&x| (x - lse).exp() * scale));
        g[0] -= scale;
        for (j, &gk) in refs().zip(&g) {
            for (o, &v) in grad_users.row_mut(i).iter_mut().zip(candidates.row(j)) {
                *o += gk * v;
            }
            for (o, &v) in grad_candidates.row_mut(j).iter_mut().zip(u) {
                *o += gk * v;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(IndexedInfoNce { loss, grad_users, grad_candidates })
}

/// Loss and gradients of [`infonce_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNce {
    pub loss: f64,
    pub grad_users: Matrix,
    pub grad_positives: Matrix,
    pub grad_negatives: Vec<Matrix>,
}

/// InfoNCE with an explicit negative matrix per example.
pub fn infonce_loss(users: &Matrix, positives: &Matrix, negatives: &[Matrix], tau: f64) -> Result<InfoNce> {
    let n = users.rows();
    Error::dims(n, positives.rows())?;
    Error::dims(n, negatives.len())?;
    let mut parts: Vec<&Matrix> = vec![positives];
    let mut neg_idx = Vec::with_capacity(n);
    let mut at = n;
    for m in negatives {
        if m.rows() == 0 {
            return Err(Error::InvalidArg("every example needs at least one negative".into()));
        }
        Error::dims(users.cols(), m.cols())?;
        neg_idx.push((at..at + m.rows()).collect::<Vec<_>>());
        at += m.rows();
        parts.push(m);
    }
    let mut values = Vec::with_capacity(at * users.cols());
    for p in &parts {
        values.extend_from_slice(p.as_slice());
    }
    let candidates = Matrix::new(at, users.cols(), values)?;
    let pos: Vec<usize> = (0..n).collect();
    let out = infonce_indexed(users, &candidates, &pos, &neg_idx, tau)?;
    let grad_positives = out.grad_candidates.select_rows(&pos);
    let grad_negatives = neg_idx.iter().map(|idx| out.grad_candidates.select_rows(idx)).collect();
    Ok(InfoNce { loss: out.loss, grad_users: out.grad_users, grad_positives, grad_negatives })
}
