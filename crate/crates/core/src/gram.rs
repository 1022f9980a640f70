use serde::{Deserialize, Serialize};

use crate::numerics::DenseMatrix;

/// How an infinite-width Gram matrix was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GramSource {
    /// Arc-cosine closed form for ReLU regression.
    ClosedForm,
    /// Average over independent standard-normal neurons.
    MonteCarlo { n_mc: usize, seed: u64 },
}

/// The infinite-width Gram matrix and the spectral quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub source: GramSource,
    pub h_inf: DenseMatrix,
    /// `λ_min(H∞)`.
    pub lambda0: f64,
    /// `‖H∞‖₂`.
    pub spectral_norm_hinf: f64,
    /// `0.5 / ‖H∞‖₂`.
    pub suggested_eta: f64,
    /// `‖H(0) − H∞‖_F` when an initialization was supplied.
    pub concentration_error: Option<f64>,
    /// Jackknife standard error of `lambda0` (0 for the closed form).
    pub estimator_stderr: f64,
    /// Set when `lambda0 ≤ 3 · estimator_stderr`.
    pub unreliable: bool,
}

/// Learning-rate fraction of `1/‖H∞‖₂` used by automatic step sizing.
pub const SUGGESTED_ETA_FACTOR: f64 = 0.5;

impl GramReport {
    pub fn dim(&self) -> usize {
        self.h_inf.rows()
    }

    /// Records `‖H(0) − H∞‖_F` for a finite-width Gram matrix.
    pub fn attach_concentration(&mut self, h0: &DenseMatrix) {
        self.concentration_error = Some(h0.sub(&self.h_inf).frobenius_norm());
    }
}
