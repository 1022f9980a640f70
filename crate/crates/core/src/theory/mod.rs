//! Measured-versus-bound checks for the convergence theory.
//!
//! Every check returns a [`CheckReport`]. Checks whose bounds involve
//! unknown universal constants are scaling checks or report-only.

mod convergence;
mod scale;
mod stability;
mod suite;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::network::{init_params, ActivationKind, ModelParams};
use crate::numerics::DenseMatrix;
use crate::pinn::{gram_pinn, jacobian, PinnDataset};
use crate::regression::{gram_finite, RegressionDataset};

pub use convergence::{
    check_gd_convergence, check_ngd_linear, check_ngd_quadratic, check_recursion, check_weight_drift,
    check_weight_drift_sweep, QUADRATIC_WINDOW,
};
pub use scale::{check_initial_scale, InitialScaleMode};
pub use stability::{
    check_gram_concentration, check_gram_stability, check_jacobian_stability, jacobian_width_trend,
    max_gram_deviation, max_jacobian_deviation, perturb_rows,
};
pub use suite::{run_suite, SuiteConfig, SuiteProfile, SuiteReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    ReportOnly,
}

/// A measured value or bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Quantity {
    Scalar { value: f64 },
    /// Acceptance window for a fitted exponent.
    Interval { lo: f64, hi: f64 },
    Curve { x: Vec<f64>, y: Vec<f64> },
    /// Bound with an unknown constant; the check only reports.
    Unspecified,
}

impl Quantity {
    pub fn scalar(value: f64) -> Self {
        Self::Scalar { value }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::Interval { lo, hi }
    }

    pub fn curve(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self::Curve { x, y }
    }
}

/// Outcome of one check.
///
/// `margin` is `bound − measured` (relative to the bound when `context`
/// says so) or, for fitted exponents, the distance to the nearest window
/// edge. Negative margins accompany failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub measured: Quantity,
    pub bound: Quantity,
    pub margin: f64,
    pub verdict: Verdict,
    pub context: BTreeMap<String, serde_json::Value>,
}

impl CheckReport {
    pub(crate) fn new(name: &str, measured: Quantity, bound: Quantity, margin: f64, verdict: Verdict) -> Self {
        Self {
            check_name: name.to_string(),
            measured,
            bound,
            margin,
            verdict,
            context: BTreeMap::new(),
        }
    }

    pub(crate) fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.context.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn gate(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Overall verdict: fails iff some gated check failed.
pub fn rollup(reports: &[CheckReport]) -> Verdict {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail
    } else {
        Verdict::Pass
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(validation("slope fit needs at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(validation("slope fit needs positive finite values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(validation("slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

pub(crate) fn window_margin(value: f64, lo: f64, hi: f64) -> f64 {
    (value - lo).min(hi - value)
}

/// The model family a Gram-level check is run on.
#[derive(Debug, Clone, Copy)]
pub enum Setting<'a> {
    /// ReLU regression.
    Regression(&'a RegressionDataset),
    Pinn {
        data: &'a PinnDataset,
        activation: ActivationKind,
    },
}

impl Setting<'_> {
    pub fn activation(&self) -> ActivationKind {
        match self {
            Self::Regression(_) => ActivationKind::Relu,
            Self::Pinn { activation, .. } => *activation,
        }
    }

    pub fn d_aug(&self) -> usize {
        match self {
            Self::Regression(d) => d.dim(),
            Self::Pinn { data, .. } => data.d_aug(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Regression(d) => d.len(),
            Self::Pinn { data, .. } => data.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self) -> &'static str {
        match self {
            Self::Regression(_) => "regression",
            Self::Pinn { .. } => "pinn",
        }
    }

    pub fn init(&self, m: usize, seed: u64) -> Result<ModelParams> {
        init_params(m, self.d_aug(), self.activation(), seed)
    }

    /// Finite-width Gram matrix at `params`.
    pub fn gram(&self, params: &ModelParams) -> Result<DenseMatrix> {
        match self {
            Self::Regression(d) => gram_finite(params, d),
            Self::Pinn { data, .. } => Ok(gram_pinn(&jacobian(params, data)?)),
        }
    }
}

/// A point uniform in the open ball of radius `radius` in `dim` dimensions.
pub(crate) fn ball_point(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let scale = radius * u.powf(1.0 / dim as f64) / n;
        return v.into_iter().map(|x| x * scale).collect();
    }
}
