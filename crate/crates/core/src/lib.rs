//! Semantic-aware negative sampling for two-tower retrieval.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); training
//! paths run in `f64` through the [`Matrix`] and [`Vector`] aliases.

pub mod behavior;
pub mod data;
pub mod ebr;
pub mod edis;
pub mod error;
pub mod eval;
pub mod msac;
pub mod optim;
pub mod sampler;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision vector used on every training and verification path.
pub type Vector = tensor::DenseVector<f64>;
/// Double-precision matrix used on every training and verification path.
pub type Matrix = tensor::DenseMatrix<f64>;
/// Storage-precision vector.
pub type Vector32 = tensor::DenseVector<f32>;
/// Storage-precision matrix, the in-memory form of embedding files.
pub type Matrix32 = tensor::DenseMatrix<f32>;
