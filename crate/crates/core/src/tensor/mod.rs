//! Dense linear algebra, similarity measures, k-means and gradient checking.

mod gradcheck;
mod kmeans;
mod matrix;
mod rng;
mod sim;
mod vector;

pub use gradcheck::grad_check;
pub use kmeans::{kmeans, nearest, KMeansParams, KMeansResult};
pub use matrix::DenseMatrix;
pub use rng::RngState;
pub(crate) use sim::MIN_NORM;
pub use sim::{cosine_sim, cosine_slices, cosine_with_grad, normalized_sim, normalized_slices};
pub use vector::{axpy, dot, norm, sq_dist, DenseVector};
