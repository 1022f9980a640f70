use serde::{Deserialize, Serialize};

use super::dataset::PinnDataset;
use super::residual::{check_pinn_params, gram_pinn, residuals_and_jacobian, ResidualPair};
use crate::error::{validation, Error, Result};
use crate::gram::GramReport;
use crate::network::ModelParams;
use crate::numerics::{min_norm_solve, norm2, solve_spd, sym_eig_extremes, DenseMatrix};
use crate::regression::relative_gap;
use crate::trace::{
    diverged, push_record, Diagnostics, EtaMode, Optimizer, Problem, StopReason, TraceRecord, TrainTrace,
};

/// NGD runs stop once the loss drops below this value.
pub const NUMERICAL_FLOOR: f64 = 1e-24;
pub const NGD_DEFAULT_ETA: f64 = 0.5;

/// Metadata of one natural-gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgdStepInfo {
    /// `λ_min(J Jᵀ)`.
    pub lambda_min: f64,
    pub ridge_fallback: bool,
    pub ridge: f64,
    /// `‖J Δw + η (s; h)‖₂`.
    pub lin_defect: f64,
}

fn apply_step(params: &ModelParams, dw: &[f64]) -> Result<ModelParams> {
    let w: Vec<f64> = params.weights().iter().zip(dw).map(|(w, d)| w + d).collect();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weights after PINN step".into()));
    }
    params.with_weights(w)
}

fn gd_direction(jac: &DenseMatrix, r: &[f64], eta: f64) -> Vec<f64> {
    jac.tr_matvec(r).into_iter().map(|g| -eta * g).collect()
}

fn ngd_direction(jac: &DenseMatrix, r: &[f64], eta: f64) -> Result<(Vec<f64>, NgdStepInfo)> {
    let h = gram_pinn(jac);
    let lambda_min = sym_eig_extremes(&h)?.lambda_min;
    let (step, ridge, fallback) = match min_norm_solve(jac, r) {
        Ok(sol) => (sol.x, 0.0, false),
        Err(Error::Singular { .. }) => {
            let sol = solve_spd(&h, r, 0.0).map_err(|e| match e {
                Error::Singular { .. } => Error::RankDeficient { lambda_min },
                other => other,
            })?;
            (jac.tr_matvec(&sol.x), sol.ridge, true)
        }
        Err(e) => return Err(e),
    };
    let dw: Vec<f64> = step.into_iter().map(|v| -eta * v).collect();
    let jdw = jac.matvec(&dw);
    let defect: Vec<f64> = jdw.iter().zip(r).map(|(a, b)| a + eta * b).collect();
    Ok((
        dw,
        NgdStepInfo {
            lambda_min,
            ridge_fallback: fallback,
            ridge,
            lin_defect: norm2(&defect),
        },
    ))
}

/// One full-batch gradient step `w ← w − η Jᵀ (s; h)`.
pub fn gd_step_pinn(params: &ModelParams, data: &PinnDataset, eta: f64) -> Result<ModelParams> {
    if !(eta >= 0.0) {
        return Err(validation(format!("learning rate must be nonnegative, got {eta}")));
    }
    let (r, jac) = residuals_and_jacobian(params, data)?;
    apply_step(params, &gd_direction(&jac, &r.stacked(), eta))
}

fn check_ngd_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(validation(format!("NGD learning rate must lie in (0, 1], got {eta}")))
    }
}

/// One natural-gradient step `w ← w − η Jᵀ (J Jᵀ)⁻¹ (s; h)`.
///
/// The step is the minimum-norm solution of `J Δw = −η (s; h)` computed
/// from an LQ factorization of `J`; when `J` is numerically rank deficient
/// the regularized normal equations `(J Jᵀ + ridge·I)` are solved instead.
pub fn ngd_step(params: &ModelParams, data: &PinnDataset, eta: f64) -> Result<(ModelParams, NgdStepInfo)> {
    check_ngd_eta(eta)?;
    let (r, jac) = residuals_and_jacobian(params, data)?;
    let (dw, info) = ngd_direction(&jac, &r.stacked(), eta)?;
    Ok((apply_step(params, &dw)?, info))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub optimizer: Optimizer,
    pub eta_mode: EtaMode,
    pub iters: usize,
    pub diagnostics: Diagnostics,
}

fn state_record(
    k: usize,
    r: &ResidualPair,
    jac: &DenseMatrix,
    params: &ModelParams,
    params0: &ModelParams,
    diagnostics: Diagnostics,
) -> TraceRecord {
    let res = r.norm();
    let mut rec = TraceRecord::new(k, 0.5 * res * res, res);
    if diagnostics.drift {
        rec.drift_max = Some(params.max_row_distance(params0));
    }
    if diagnostics.gram {
        rec.lambda_min_h = sym_eig_extremes(&gram_pinn(jac)).ok().map(|s| s.lambda_min);
    }
    rec
}

/// Trains a PINN with GD or NGD and records the trace.
///
/// GD with `EtaMode::Auto` needs `gram` (its `suggested_eta` sets η); NGD
/// defaults to η = 0.5. A supplied report is attached to the trace. NGD
/// logs the linearization defect and `λ_min(J Jᵀ)` every step and stops at
/// the numerical floor; GD logs the remainder
/// `I₁(k) = r(k+1) − r(k) − J(k) Δw` and, with `diagnostics.gram`, the
/// disagreement between `J(k) Δw` and `−η H(k) r(k)`.
pub fn train(
    params0: &ModelParams,
    data: &PinnDataset,
    settings: TrainSettings,
    gram: Option<&GramReport>,
) -> Result<TrainTrace> {
    let TrainSettings {
        optimizer,
        eta_mode,
        iters,
        diagnostics,
    } = settings;
    if iters == 0 {
        return Err(validation("iters must be at least 1"));
    }
    check_pinn_params(params0, data)?;
    if let Some(g) = gram {
        if g.dim() != data.len() {
            return Err(validation(format!(
                "Gram report has dimension {} but the dataset has {} points",
                g.dim(),
                data.len()
            )));
        }
    }
    let eta = match (optimizer, eta_mode) {
        (Optimizer::Gd, EtaMode::Auto) => match gram {
            Some(g) => g.suggested_eta,
            None => return Err(validation("GD with automatic learning rate needs a Gram report")),
        },
        (Optimizer::Ngd, EtaMode::Auto) => NGD_DEFAULT_ETA,
        (Optimizer::Gd, EtaMode::Fixed(eta)) if eta >= 0.0 && eta.is_finite() => eta,
        (Optimizer::Gd, EtaMode::Fixed(eta)) => {
            return Err(validation(format!("invalid fixed learning rate {eta}")))
        }
        (Optimizer::Ngd, EtaMode::Fixed(eta)) => {
            check_ngd_eta(eta)?;
            eta
        }
    };

    let mut trace = TrainTrace {
        problem: Problem::Pinn,
        optimizer,
        activation: params0.activation(),
        width: params0.width(),
        eta,
        iters_requested: iters,
        stop: StopReason::Completed,
        gram: gram.cloned(),
        records: Vec::with_capacity(iters + 1),
    };

    let mut params = params0.clone();
    let (mut r, mut jac) = residuals_and_jacobian(&params, data)?;
    let mut rec = state_record(0, &r, &jac, &params, params0, diagnostics);
    let loss0 = rec.loss;

    for k in 0..iters {
        if optimizer == Optimizer::Ngd && rec.loss < NUMERICAL_FLOOR {
            trace.stop = StopReason::NumericalFloor;
            break;
        }
        let rv = r.stacked();
        let dw = match optimizer {
            Optimizer::Gd => gd_direction(&jac, &rv, eta),
            Optimizer::Ngd => {
                let (dw, info) = match ngd_direction(&jac, &rv, eta) {
                    Ok(v) => v,
                    Err(e) => {
                        push_record(&mut trace.records, rec);
                        return Err(e);
                    }
                };
                rec.lin_defect = Some(info.lin_defect);
                rec.lambda_min_h = Some(info.lambda_min);
                rec.ridge_fallback = Some(info.ridge_fallback);
                dw
            }
        };
        let next = apply_step(&params, &dw)?;
        let (r_next, jac_next) = residuals_and_jacobian(&next, data)?;

        if optimizer == Optimizer::Gd && (diagnostics.remainder || diagnostics.gram) {
            let jdw = jac.matvec(&dw);
            if diagnostics.remainder {
                let i1: Vec<f64> = r_next
                    .stacked()
                    .iter()
                    .zip(&rv)
                    .zip(&jdw)
                    .map(|((a, b), c)| a - b - c)
                    .collect();
                rec.i1_norm = Some(norm2(&i1));
            }
            if diagnostics.gram {
                let hr = gram_pinn(&jac).matvec(&rv);
                let via_gram: Vec<f64> = hr.iter().map(|v| -eta * v).collect();
                rec.i2_discrepancy = Some(relative_gap(&jdw, &via_gram));
            }
        }
        push_record(&mut trace.records, rec);

        params = next;
        r = r_next;
        jac = jac_next;
        rec = state_record(k + 1, &r, &jac, &params, params0, diagnostics);
        if diverged(rec.loss, loss0) {
            let (iter, loss) = (rec.iter, rec.loss);
            push_record(&mut trace.records, rec);
            trace.stop = StopReason::Diverged;
            return Err(Error::Diverged {
                iter,
                loss,
                trace: Box::new(trace),
            });
        }
    }
    push_record(&mut trace.records, rec);
    Ok(trace)
}
