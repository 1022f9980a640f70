use serde::{Deserialize, Serialize};

use super::eig::SYMMETRY_TOL;
use super::matrix::{norm2, DenseMatrix};
use crate::error::{validation, Error, Result};

/// Ridge applied when an unregularized factorization fails, as a fraction
/// of the mean diagonal entry `trace(A)/dim(A)`.
pub const FALLBACK_RIDGE_FACTOR: f64 = 1e-12;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdSolution {
    pub x: Vec<f64>,
    /// Ridge actually added to the diagonal.
    pub ridge: f64,
    /// True when the requested factorization failed and the default ridge
    /// was applied instead.
    pub fallback: bool,
    /// `‖(A + ridge·I)x − b‖₂`.
    pub residual_norm: f64,
}

/// Lower Cholesky factor of `A + ridge·I`, or `None` if a pivot is not
/// strictly positive.
fn cholesky(a: &DenseMatrix, ridge: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + ridge;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

fn residual(a: &DenseMatrix, ridge: f64, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    b.iter()
        .zip(ax)
        .zip(x)
        .map(|((bi, axi), xi)| bi - axi - ridge * xi)
        .collect()
}

/// Solves `(A + ridge·I) x = b` for symmetric positive semi-definite `A` by
/// Cholesky factorization with iterative refinement.
///
/// With `ridge = 0`, a failed factorization is retried once with
/// `FALLBACK_RIDGE_FACTOR · trace(A)/dim(A)` and flagged in the result.
pub fn solve_spd(a: &DenseMatrix, b: &[f64], ridge: f64) -> Result<SpdSolution> {
    if !a.is_square() {
        return Err(validation(format!(
            "solve_spd needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != a.rows() {
        return Err(validation(format!(
            "right-hand side has length {}, matrix has dimension {}",
            b.len(),
            a.rows()
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(validation(format!("ridge must be a finite nonnegative number, got {ridge}")));
    }
    if a.asymmetry() > SYMMETRY_TOL {
        return Err(validation("solve_spd needs a symmetric matrix"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SpdSolution {
            x: Vec::new(),
            ridge,
            fallback: false,
            residual_norm: 0.0,
        });
    }

    let (l, ridge, fallback) = match cholesky(a, ridge) {
        Some(l) => (l, ridge, false),
        None if ridge == 0.0 => {
            let fallback_ridge = FALLBACK_RIDGE_FACTOR * a.trace() / n as f64;
            if !(fallback_ridge > 0.0) {
                return Err(Error::Singular { ridge: fallback_ridge });
            }
            let l = cholesky(a, fallback_ridge).ok_or(Error::Singular { ridge: fallback_ridge })?;
            (l, fallback_ridge, true)
        }
        None => return Err(Error::Singular { ridge }),
    };

    let b_norm = norm2(b);
    let mut x = cholesky_solve(&l, b);
    let mut r = residual(a, ridge, &x, b);
    for _ in 0..REFINEMENT_STEPS {
        if norm2(&r) <= 1e-15 * b_norm {
            break;
        }
        let dx = cholesky_solve(&l, &r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let r_new = residual(a, ridge, &candidate, b);
        if norm2(&r_new) >= norm2(&r) {
            break;
        }
        x = candidate;
        r = r_new;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { ridge });
    }
    Ok(SpdSolution {
        x,
        ridge,
        fallback,
        residual_norm: norm2(&r),
    })
}
