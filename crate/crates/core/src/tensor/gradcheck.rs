use crate::error::{Error, Result};

/// Compares an analytic gradient against central finite differences.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn grad_check(
    mut loss_fn: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidArg(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    Error::dims(params.len(), analytic.len())?;
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let up = loss_fn(&x);
        x[i] = orig - epsilon;
        let down = loss_fn(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let err = grad_check(f, &[1.0, 2.0], &[2.0, 4.0], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant() {
        let err = grad_check(|_| 3.5, &[0.1, -0.2, 7.0], &[0.0; 3], 1e-4).unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |x: &[f64]| x[0] * x[0];
        assert!(grad_check(f, &[1.0], &[3.0], 1e-5).unwrap() > 0.1);
    }

    #[test]
    fn rejects_nan_and_bad_epsilon() {
        assert!(matches!(grad_check(|_| f64::NAN, &[1.0], &[0.0], 1e-5), Err(Error::NonFiniteLoss)));
        assert!(grad_check(|_| 0.0, &[1.0], &[0.0], 0.1).is_err());
        assert!(grad_check(|_| 0.0, &[1.0], &[0.0], 0.0).is_err());
    }
}
