use rayon::prelude::*;

use super::matrix::{dot, DenseMatrix};
use crate::error::{validation, Error, Result};

/// Pivots of `L` below this fraction of the largest pivot mark `A` as
/// numerically rank deficient.
pub const LQ_RANK_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormSolution {
    pub x: Vec<f64>,
    /// Smallest and largest `|L_kk|`; their squares bracket the spectrum of `AAᵀ`.
    pub min_pivot: f64,
    pub max_pivot: f64,
}

/// Minimum-norm solution of the underdetermined system `A x = b`
/// (`A` wide with full row rank), i.e. `x = Aᵀ(AAᵀ)⁻¹b`.
///
/// Uses a Householder LQ factorization `A = L Q`, so the error grows with
/// `cond(A)` rather than `cond(AAᵀ)`.
pub fn min_norm_solve(a: &DenseMatrix, b: &[f64]) -> Result<MinNormSolution> {
    let (n, p) = (a.rows(), a.cols());
    if b.len() != n {
        return Err(validation(format!("right-hand side has length {}, matrix has {n} rows", b.len())));
    }
    if n > p {
        return Err(validation(format!("min_norm_solve needs rows <= cols, got {n}x{p}")));
    }
    let mut w = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let row = &w.row(k)[k..];
        let alpha = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = row.to_vec();
        let diag = if v[0] >= 0.0 { -alpha } else { alpha };
        v[0] -= diag;
        let vv = dot(&v, &v);
        {
            let r = w.row_mut(k);
            r[k] = diag;
            r[k + 1..].iter_mut().for_each(|x| *x = 0.0);
        }
        if vv > 0.0 {
            let data = w.as_mut_slice();
            data[(k + 1) * p..].par_chunks_mut(p).for_each(|r| {
                let tail = &mut r[k..];
                let c = 2.0 * dot(tail, &v) / vv;
                tail.iter_mut().zip(&v).for_each(|(t, vi)| *t -= c * vi);
            });
        }
        reflectors.push(v);
    }

    let pivots: Vec<f64> = (0..n).map(|k| w.row(k)[k].abs()).collect();
    let max_pivot = pivots.iter().copied().fold(0.0, f64::max);
    let min_pivot = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if n > 0 && !(min_pivot > LQ_RANK_TOL * max_pivot) {
        return Err(Error::Singular { ridge: 0.0 });
    }

    // L y = b, then x = H_0 … H_{n-1} (y; 0)
    let mut x = vec![0.0; p];
    for i in 0..n {
        let li = w.row(i);
        let s: f64 = b[i] - (0..i).map(|j| li[j] * x[j]).sum::<f64>();
        x[i] = s / li[i];
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        let vv = dot(v, v);
        if vv > 0.0 {
            let tail = &mut x[k..];
            let c = 2.0 * dot(tail, v) / vv;
            tail.iter_mut().zip(v).for_each(|(t, vi)| *t -= c * vi);
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("minimum-norm solution".into()));
    }
    Ok(MinNormSolution {
        x,
        min_pivot,
        max_pivot,
    })
}
