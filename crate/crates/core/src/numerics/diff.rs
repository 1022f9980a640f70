use crate::error::{Error, Result};

/// Default step for first-derivative central differences.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Default step for second differences.
pub const DEFAULT_SECOND_STEP: f64 = 1e-4;

/// Central-difference gradient of `f` at `w`:
/// `(f(w + h e_i) − f(w − h e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad<F>(f: F, w: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Validation(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "function evaluation at coordinate {i} returned {fp} / {fm}"
            )));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Central first derivative of a scalar function.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central second difference `(f(x+h) − 2f(x) + f(x−h)) / h²`.
pub fn central_second_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_constant() {
        let w = [0.3, -1.2, 2.0];
        let g = finite_diff_grad(|v| 0.5 * v.iter().map(|x| x * x).sum::<f64>(), &w, DEFAULT_STEP).unwrap();
        for (gi, wi) in g.iter().zip(&w) {
            assert!((gi - wi).abs() < 1e-9);
        }
        let g = finite_diff_grad(|_| 4.0, &w, DEFAULT_STEP).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn propagates_non_finite() {
        let err = finite_diff_grad(|v| 1.0 / (v[0] - 1e-5), &[0.0], 1e-5).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(finite_diff_grad(|v| v[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn second_difference_of_cubic() {
        let d2 = central_second_diff(|x| x * x * x, 0.7, DEFAULT_SECOND_STEP);
        assert!((d2 - 6.0 * 0.7).abs() < 1e-6);
    }
}
