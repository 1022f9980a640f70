use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{validation, Result};

/// Relative symmetry tolerance accepted by the symmetric eigensolver.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Cyclic Jacobi stops once the off-diagonal Frobenius mass drops below
/// this fraction of `‖A‖_F`.
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spectral_norm: f64,
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(validation(format!(
            "symmetric eigensolve needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() == 0 {
        return Err(validation("symmetric eigensolve of an empty matrix"));
    }
    if !a.is_finite() {
        return Err(validation("matrix has non-finite entries"));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(validation(format!(
            "matrix is not symmetric (relative asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix in ascending order, by cyclic
/// Jacobi rotations.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let n = a.rows();
    // work on the symmetrized copy
    let mut w = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let target = JACOBI_TOL * w.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&w) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut w, p, q);
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| w[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn off_diagonal_norm(w: &DenseMatrix) -> f64 {
    let n = w.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += w[(i, j)] * w[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating `w[p][q]` (Rutishauser's update).
fn rotate(w: &mut DenseMatrix, p: usize, q: usize) {
    let apq = w[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = w[(p, p)];
    let aqq = w[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    w[(p, p)] = app - t * apq;
    w[(q, q)] = aqq + t * apq;
    w[(p, q)] = 0.0;
    w[(q, p)] = 0.0;
    for r in 0..w.rows() {
        if r == p || r == q {
            continue;
        }
        let arp = w[(r, p)];
        let arq = w[(r, q)];
        let nrp = arp - s * (arq + tau * arp);
        let nrq = arq + s * (arp - tau * arq);
        w[(r, p)] = nrp;
        w[(p, r)] = nrp;
        w[(r, q)] = nrq;
        w[(q, r)] = nrq;
    }
}

pub fn sym_eig_extremes(a: &DenseMatrix) -> Result<SpectrumSummary> {
    let eig = sym_eigenvalues(a)?;
    let lambda_min = eig[0];
    let lambda_max = eig[eig.len() - 1];
    Ok(SpectrumSummary {
        lambda_min,
        lambda_max,
        spectral_norm: lambda_min.abs().max(lambda_max.abs()),
    })
}

/// Largest singular value. Symmetric input goes straight to the eigensolver;
/// anything else goes through the smaller of `A Aᵀ` and `Aᵀ A`.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    if a.is_square() && a.asymmetry() == 0.0 {
        if let Ok(s) = sym_eig_extremes(a) {
            return s.spectral_norm;
        }
    }
    let gram = if a.rows() <= a.cols() {
        a.outer_gram()
    } else {
        a.inner_gram()
    };
    match sym_eig_extremes(&gram) {
        Ok(s) => s.lambda_max.max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}
