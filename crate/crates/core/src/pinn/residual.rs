use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::PinnDataset;
use crate::error::{validation, Error, Result};
use crate::network::{ActivationKind, ModelParams};
use crate::numerics::{norm2, DenseMatrix};

/// Interior residuals `s` (length `n₁`) and boundary residuals `h` (length `n₂`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPair {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
}

impl ResidualPair {
    /// `(s; h)` as one vector.
    pub fn stacked(&self) -> Vec<f64> {
        self.s.iter().chain(&self.h).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.stacked())
    }

    /// `½(‖s‖² + ‖h‖²)`.
    pub fn loss(&self) -> f64 {
        let n = self.norm();
        0.5 * n * n
    }
}

pub(crate) fn check_pinn_params(params: &ModelParams, data: &PinnDataset) -> Result<()> {
    if params.activation() == ActivationKind::Relu {
        return Err(Error::Unsupported(
            "PINN residuals need second derivatives; ReLU is not supported".into(),
        ));
    }
    if params.d_aug() != data.d_aug() {
        return Err(validation(format!(
            "model input dimension {} does not match dataset dimension {}",
            params.d_aug(),
            data.d_aug()
        )));
    }
    Ok(())
}

/// Contribution of one neuron with weights `w` to the PDE operator at the
/// augmented point `c`, without the `a_r/√m` factor, and its gradient with
/// respect to `w` (written into `grad`).
///
/// Operator: `σ′(z) w₀ − σ″(z) ‖w_space‖²` with `z = wᵀc`.
pub(crate) fn interior_feature(act: ActivationKind, w: &[f64], c: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let d_aug = w.len();
    let z: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum();
    let [_, s1, s2, s3] = act.derivatives(z);
    let space = &w[1..d_aug - 1];
    let nw: f64 = space.iter().map(|v| v * v).sum();
    if let Some(g) = grad {
        let along = s2 * w[0] - s3 * nw;
        for (gi, ci) in g.iter_mut().zip(c) {
            *gi = along * ci;
        }
        g[0] += s1;
        for (gi, wi) in g[1..d_aug - 1].iter_mut().zip(space) {
            *gi -= 2.0 * s2 * wi;
        }
    }
    s1 * w[0] - s2 * nw
}

/// Boundary contribution `σ(z)` and its gradient `σ′(z) c`.
pub(crate) fn boundary_feature(act: ActivationKind, w: &[f64], c: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let z: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum();
    let [s0, s1, _, _] = act.derivatives(z);
    if let Some(g) = grad {
        for (gi, ci) in g.iter_mut().zip(c) {
            *gi = s1 * ci;
        }
    }
    s0
}

/// Per-row data: augmented point, target value, `1/√n` for its block and
/// whether it is an interior row.
pub(crate) fn rows(data: &PinnDataset) -> Vec<(&[f64], f64, f64, bool)> {
    let si = 1.0 / (data.n_interior().max(1) as f64).sqrt();
    let sb = 1.0 / (data.n_boundary().max(1) as f64).sqrt();
    data.interior()
        .iter()
        .zip(data.f_values())
        .map(|(p, &f)| (p.coords(), f, si, true))
        .chain(data.boundary().iter().zip(data.g_values()).map(|(p, &g)| (p.coords(), g, sb, false)))
        .collect()
}

fn split(data: &PinnDataset, r: Vec<f64>) -> ResidualPair {
    let mut s = r;
    let h = s.split_off(data.n_interior());
    ResidualPair { s, h }
}

/// `s_p = (1/√n₁)(L[φ](x_p) − f(x_p))` and `h_j = (1/√n₂)(φ(y_j) − g(y_j))`.
pub fn residuals(params: &ModelParams, data: &PinnDataset) -> Result<ResidualPair> {
    check_pinn_params(params, data)?;
    let act = params.activation();
    let d = params.d_aug();
    let scale = params.inv_sqrt_m();
    let r: Vec<f64> = rows(data)
        .par_iter()
        .map(|&(c, target, norm, interior)| {
            let mut acc = 0.0;
            for (r, a) in params.signs().iter().enumerate() {
                let w = &params.weights()[r * d..(r + 1) * d];
                let v = if interior {
                    interior_feature(act, w, c, None)
                } else {
                    boundary_feature(act, w, c, None)
                };
                acc += a * v;
            }
            norm * (scale * acc - target)
        })
        .collect();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PINN residuals".into()));
    }
    Ok(split(data, r))
}

/// `½(‖s‖² + ‖h‖²)`.
pub fn pinn_loss(params: &ModelParams, data: &PinnDataset) -> Result<f64> {
    Ok(residuals(params, data)?.loss())
}

/// Residuals and the Jacobian `∂(s; h)/∂w` (rows: interior then boundary;
/// columns: neuron-major weights) in a single pass.
pub fn residuals_and_jacobian(params: &ModelParams, data: &PinnDataset) -> Result<(ResidualPair, DenseMatrix)> {
    check_pinn_params(params, data)?;
    let act = params.activation();
    let d = params.d_aug();
    let p = params.num_weights();
    let scale = params.inv_sqrt_m();
    let rows = rows(data);
    let mut jac = vec![0.0; rows.len() * p];
    let r: Vec<f64> = jac
        .par_chunks_mut(p)
        .zip(rows.par_iter())
        .map(|(jrow, &(c, target, norm, interior))| {
            let mut acc = 0.0;
            for (r, a) in params.signs().iter().enumerate() {
                let w = &params.weights()[r * d..(r + 1) * d];
                let g = &mut jrow[r * d..(r + 1) * d];
                let v = if interior {
                    interior_feature(act, w, c, Some(g))
                } else {
                    boundary_feature(act, w, c, Some(g))
                };
                let coef = norm * scale * a;
                for gi in g.iter_mut() {
                    *gi *= coef;
                }
                acc += a * v;
            }
            norm * (scale * acc - target)
        })
        .collect();
    if r.iter().any(|v| !v.is_finite()) || jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PINN residuals or Jacobian".into()));
    }
    let jac = DenseMatrix::from_row_major(rows.len(), p, jac)?;
    Ok((split(data, r), jac))
}

pub fn jacobian(params: &ModelParams, data: &PinnDataset) -> Result<DenseMatrix> {
    Ok(residuals_and_jacobian(params, data)?.1)
}

/// Finite-width Gram matrix `H = J Jᵀ`.
pub fn gram_pinn(jac: &DenseMatrix) -> DenseMatrix {
    jac.outer_gram()
}
