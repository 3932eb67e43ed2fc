use super::vector::{dot, norm, DenseVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) const MIN_NORM: f64 = 1e-12;

/// Cosine similarity `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_sim<T: Scalar>(a: &DenseVector<T>, b: &DenseVector<T>) -> Result<T> {
    cosine_slices(a.as_slice(), b.as_slice())
}

/// Cosine similarity mapped affinely onto `[0, 1]`: `(cos + 1) / 2`.
pub fn normalized_sim<T: Scalar>(a: &DenseVector<T>, b: &DenseVector<T>) -> Result<T> {
    normalized_slices(a.as_slice(), b.as_slice())
}

pub fn cosine_slices<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    Error::dims(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    let min = T::of(MIN_NORM);
    if na < min || nb < min {
        return Err(Error::ZeroNormVector);
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

pub fn normalized_slices<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    Ok((cosine_slices(a, b)? + T::one()) * T::half())
}

/// Cosine similarity and its partial derivatives with respect to both inputs.
///
/// Returns `(cos, ∂cos/∂a, ∂cos/∂b)`. No clamping is applied so the value and
/// derivative stay consistent.
pub fn cosine_with_grad<T: Scalar>(a: &[T], b: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
    Error::dims(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    let min = T::of(MIN_NORM);
    if na < min || nb < min {
        return Err(Error::ZeroNormVector);
    }
    let inv = T::one() / (na * nb);
    let c = dot(a, b) * inv;
    let (ca, cb) = (c / (na * na), c / (nb * nb));
    let da = a.iter().zip(b).map(|(&x, &y)| y * inv - ca * x).collect();
    let db = a.iter().zip(b).map(|(&x, &y)| x * inv - cb * y).collect();
    Ok((c, da, db))
}
