//! Lloyd's k-means with k-means++ seeding and restarts.

use super::matrix::DenseMatrix;
use super::rng::RngState;
use super::vector::sq_dist;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        Self { k, restarts: 10, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    /// `k × dim`
    pub centroids: DenseMatrix<T>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub trace: Vec<f64>,
}

/// Index of the nearest row of `centroids` to `point`; ties go to the lowest index.
pub fn nearest<T: Scalar>(centroids: &DenseMatrix<T>, point: &[T]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (k, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

pub fn kmeans<T: Scalar>(
    points: &DenseMatrix<T>,
    params: KMeansParams,
    rng: &mut RngState,
) -> Result<KMeansResult<T>> {
    let KMeansParams { k, restarts, max_iter } = params;
    if k == 0 {
        return Err(Error::InvalidArg("k must be at least 1".into()));
    }
    if restarts == 0 {
        return Err(Error::InvalidArg("restarts must be at least 1".into()));
    }
    if points.rows() < k {
        return Err(Error::TooFewPoints { points: points.rows(), k });
    }
    let mut best: Option<KMeansResult<T>> = None;
    for _ in 0..restarts {
        let run = lloyd(points, k, max_iter, rng);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn lloyd<T: Scalar>(points: &DenseMatrix<T>, k: usize, max_iter: usize, rng: &mut RngState) -> KMeansResult<T> {
    let mut centroids = plus_plus(points, k, rng);
    let (mut assignments, mut dists) = assign_all(points, &centroids);
    let mut trace = vec![objective(&dists)];
    for _ in 0..max_iter {
        update_centroids(points, &mut centroids, &assignments, &mut dists);
        let (next, next_dists) = assign_all(points, &centroids);
        trace.push(objective(&next_dists));
        dists = next_dists;
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let objective = objective(&dists);
    KMeansResult { centroids, assignments, objective, trace }
}

fn plus_plus<T: Scalar>(points: &DenseMatrix<T>, k: usize, rng: &mut RngState) -> DenseMatrix<T> {
    let n = points.rows();
    let mut centroids = DenseMatrix::zeros(k, points.cols());
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(first)).to_f64_lossy()).collect();
    for c in 1..k {
        // all remaining mass zero means duplicates only; fall back to uniform
        let pick = rng.weighted(&d2).unwrap_or_else(|| rng.below(n));
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)).to_f64_lossy());
        }
    }
    centroids
}

fn assign_all<T: Scalar>(points: &DenseMatrix<T>, centroids: &DenseMatrix<T>) -> (Vec<usize>, Vec<f64>) {
    points
        .iter_rows()
        .map(|p| {
            let (k, d) = nearest(centroids, p);
            (k, d.to_f64_lossy())
        })
        .unzip()
}

fn objective(dists: &[f64]) -> f64 {
    dists.iter().sum()
}

/// Moves every centroid to the mean of its points. A centroid left without
/// points is re-seeded to the point farthest from its current centroid.
fn update_centroids<T: Scalar>(
    points: &DenseMatrix<T>,
    centroids: &mut DenseMatrix<T>,
    assignments: &[usize],
    dists: &mut [f64],
) {
    let k = centroids.rows();
    let dim = points.cols();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, &x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += x.to_f64_lossy();
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let inv = 1.0 / counts[c] as f64;
        for (dst, &s) in centroids.row_mut(c).iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
            *dst = T::of(s * inv);
        }
    }
    for c in (0..k).filter(|&c| counts[c] == 0) {
        let far = argmax(dists);
        centroids.row_mut(c).copy_from_slice(points.row(far));
        dists[far] = 0.0;
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
