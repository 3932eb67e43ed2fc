//! Modality projections and the pairwise contrastive alignment loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dot, norm, DenseMatrix, RngState};

/// Number of input modalities (image, text, behavior).
pub const VIEWS: usize = 3;

/// Linear maps taking each modality's native dimension to the shared `d_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentParams<T = f64> {
    /// `d_X × d_m` per modality, in image, text, behavior order.
    pub weights: [DenseMatrix<T>; VIEWS],
    /// Length `d_m` per modality.
    pub biases: [Vec<T>; VIEWS],
}

/// The three projected views of a batch, each `N × d_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedModalities<T = f64> {
    pub views: [DenseMatrix<T>; VIEWS],
}

impl<T: Scalar> ProjectedModalities<T> {
    pub fn new(views: [DenseMatrix<T>; VIEWS]) -> Result<Self> {
        let (n, d) = views[0].shape();
        for v in &views[1..] {
            Error::dims(n, v.rows())?;
            Error::dims(d, v.cols())?;
        }
        Ok(Self { views })
    }

    pub fn rows(&self) -> usize {
        self.views[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.views[0].cols()
    }
}

impl<T: Scalar> AlignmentParams<T> {
    /// Gaussian weights with variance `1 / d_in`, zero biases.
    pub fn random(input_dims: [usize; VIEWS], d_m: usize, rng: &mut RngState) -> Self {
        let weights = input_dims.map(|d| {
            let scale = 1.0 / (d as f64).sqrt();
            DenseMatrix::from_fn(d, d_m, |_, _| T::of(rng.normal() * scale))
        });
        Self { weights, biases: [(); VIEWS].map(|_| vec![T::zero(); d_m]) }
    }

    /// Identity maps; requires every input dimension to equal `d`.
    pub fn identity(d: usize) -> Self {
        Self {
            weights: [(); VIEWS].map(|_| DenseMatrix::identity(d)),
            biases: [(); VIEWS].map(|_| vec![T::zero(); d]),
        }
    }

    pub fn d_m(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn input_dims(&self) -> [usize; VIEWS] {
        [self.weights[0].rows(), self.weights[1].rows(), self.weights[2].rows()]
    }

    /// `M_X = R_X · W_X + b_X` for each modality.
    pub fn project(&self, inputs: [&DenseMatrix<T>; VIEWS]) -> Result<ProjectedModalities<T>> {
        Error::dims(inputs[0].rows(), inputs[1].rows())?;
        Error::dims(inputs[0].rows(), inputs[2].rows())?;
        let mut views = Vec::with_capacity(VIEWS);
        for v in 0..VIEWS {
            let mut m = inputs[v].matmul(&self.weights[v])?;
            for r in 0..m.rows() {
                for (x, &b) in m.row_mut(r).iter_mut().zip(&self.biases[v]) {
                    *x += b;
                }
            }
            views.push(m);
        }
        let views: [DenseMatrix<T>; VIEWS] = views.try_into().expect("three views");
        ProjectedModalities::new(views)
    }

    /// Parameter gradients given `∂L/∂M_X` for each view.
    pub fn backward(&self, inputs: [&DenseMatrix<T>; VIEWS], grad_views: [&DenseMatrix<T>; VIEWS]) -> Result<Self> {
        let mut weights = Vec::with_capacity(VIEWS);
        let mut biases = Vec::with_capacity(VIEWS);
        for v in 0..VIEWS {
            weights.push(inputs[v].t_matmul(grad_views[v])?);
            let mut b = vec![T::zero(); grad_views[v].cols()];
            for row in grad_views[v].iter_rows() {
                for (acc, &g) in b.iter_mut().zip(row) {
                    *acc += g;
                }
            }
            biases.push(b);
        }
        Ok(Self {
            weights: weights.try_into().expect("three views"),
            biases: biases.try_into().expect("three views"),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.clone().map(|w| DenseMatrix::zeros(w.rows(), w.cols())),
            biases: self.biases.clone().map(|b| vec![T::zero(); b.len()]),
        }
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        for v in 0..VIEWS {
            for (a, &b) in self.weights[v].as_mut_slice().iter_mut().zip(other.weights[v].as_slice()) {
                *a += s * b;
            }
            for (a, &b) in self.biases[v].iter_mut().zip(&other.biases[v]) {
                *a += s * b;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss<T> {
    pub loss: T,
    pub grad_a: DenseMatrix<T>,
    pub grad_b: DenseMatrix<T>,
}

/// Unit-normalized rows and the original norms.
fn unit_rows<T: Scalar>(m: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let n = norm(m.row(r));
        if n.to_f64_lossy() < crate::tensor::MIN_NORM {
            return Err(Error::ZeroNormVector);
        }
        for x in out.row_mut(r) {
            *x /= n;
        }
        norms.push(n);
    }
    Ok((out, norms))
}

fn softmax_in_place<T: Scalar>(xs: &mut [T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
    max + sum.ln()
}

/// Symmetric in-batch contrastive loss between matched rows of `a` and `b`.
///
/// With `h(x, y) = exp(cos(x, y) / τ)`, the A→B direction is
/// `-(1/N) Σ_i log(h(a_i, b_i) / Σ_j h(a_i, b_j))`; the B→A direction swaps
/// roles. The returned loss is the mean of both directions.
pub fn pairwise_alignment_loss<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>, tau: T) -> Result<PairLoss<T>> {
    Error::dims(a.rows(), b.rows())?;
    Error::dims(a.cols(), b.cols())?;
    let n = a.rows();
    if n < 2 {
        return Err(Error::InvalidArg("alignment loss needs at least 2 rows".into()));
    }
    if !(tau > T::zero()) {
        return Err(Error::InvalidArg("alignment temperature must be positive".into()));
    }
    let (ua, na) = unit_rows(a)?;
    let (ub, nb) = unit_rows(b)?;
    let cos = ua.matmul_t(&ub)?;
    let logits = cos.map(|c| c / tau);
    let nf = T::of(n as f64);
    let half = T::half();

    // ∂L/∂S, accumulated from both directions
    let mut g = DenseMatrix::<T>::zeros(n, n);
    let mut loss = T::zero();
    let mut row = vec![T::zero(); n];
    for i in 0..n {
        row.copy_from_slice(logits.row(i));
        let lse = softmax_in_place(&mut row);
        loss += lse - logits.get(i, i);
        for (j, &p) in row.iter().enumerate() {
            let v = g.get(i, j) + half * p / nf;
            g.set(i, j, v);
        }
        let v = g.get(i, i) - half / nf;
        g.set(i, i, v);
    }
    for j in 0..n {
        for (i, x) in row.iter_mut().enumerate() {
            *x = logits.get(i, j);
        }
        let lse = softmax_in_place(&mut row);
        loss += lse - logits.get(j, j);
        for (i, &p) in row.iter().enumerate() {
            let v = g.get(i, j) + half * p / nf;
            g.set(i, j, v);
        }
        let v = g.get(j, j) - half / nf;
        g.set(j, j, v);
    }
    let loss = loss * half / nf;

    // through S = cos / τ and the row normalizations
    let g = g.map(|x| x / tau);
    let grad_ua = g.matmul(&ub)?;
    let grad_ub = g.t_matmul(&ua)?;
    let grad_a = project_out(&grad_ua, &ua, &na);
    let grad_b = project_out(&grad_ub, &ub, &nb);
    Ok(PairLoss { loss, grad_a, grad_b })
}

/// Chain rule through `x̂ = x / ‖x‖`: `(g - (g·x̂) x̂) / ‖x‖` per row.
fn project_out<T: Scalar>(grad_unit: &DenseMatrix<T>, unit: &DenseMatrix<T>, norms: &[T]) -> DenseMatrix<T> {
    let mut out = grad_unit.clone();
    for r in 0..out.rows() {
        let u = unit.row(r);
        let along = dot(grad_unit.row(r), u);
        for (o, &x) in out.row_mut(r).iter_mut().zip(u) {
            *o = (*o - along * x) / norms[r];
        }
    }
    out
}
