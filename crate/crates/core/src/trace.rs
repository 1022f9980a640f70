//! Per-iteration training traces and their CSV/JSON exports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::gram::GramReport;
use crate::network::ActivationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Regression,
    Pinn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Gd,
    Ngd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Completed,
    /// Loss fell below the numerical floor; later ratios would be noise.
    NumericalFloor,
    Diverged,
}

/// State at iteration `iter`. Step quantities (`step_ratio`, `i1_norm`,
/// `i2_discrepancy`, `lin_defect`) describe the step from `iter` to
/// `iter + 1` and are empty on the final record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: f64,
    /// `‖y − u(k)‖₂` for regression, `‖(s; h)‖₂` for PINNs.
    pub res_norm: f64,
    /// `loss(k+1) / loss(k)`.
    pub step_ratio: Option<f64>,
    /// `‖I₁(k)‖₂`, the second-order remainder of the step.
    pub i1_norm: Option<f64>,
    /// Relative disagreement of the two routes to the first-order term.
    pub i2_discrepancy: Option<f64>,
    /// `‖J Δw + η (s; h)‖₂` for NGD steps.
    pub lin_defect: Option<f64>,
    /// `max_r ‖w_r(k) − w_r(0)‖₂`.
    pub drift_max: Option<f64>,
    /// `λ_min(H(k))`.
    pub lambda_min_h: Option<f64>,
    /// Whether the NGD solve needed the ridge fallback.
    pub ridge_fallback: Option<bool>,
}

impl TraceRecord {
    pub fn new(iter: usize, loss: f64, res_norm: f64) -> Self {
        Self {
            iter,
            loss,
            res_norm,
            step_ratio: None,
            i1_norm: None,
            i2_discrepancy: None,
            lin_defect: None,
            drift_max: None,
            lambda_min_h: None,
            ridge_fallback: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub problem: Problem,
    pub optimizer: Optimizer,
    pub activation: ActivationKind,
    pub width: usize,
    pub eta: f64,
    pub iters_requested: usize,
    pub stop: StopReason,
    /// Infinite-width Gram report the run was configured from.
    pub gram: Option<GramReport>,
    pub records: Vec<TraceRecord>,
}

pub const REGRESSION_CSV_HEADER: &str = "iter,loss,res_norm,step_ratio,i1_norm,drift_max,lambda_min_h";
pub const PINN_CSV_HEADER: &str = "iter,loss,res_norm,step_ratio,i1_norm,lin_defect,drift_max,lambda_min_h";

/// 17 significant digits: lossless for `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

impl TrainTrace {
    /// Trace with only losses and residual norms, `loss = ½ res²`; used to
    /// exercise the checks on constructed sequences.
    pub fn from_residual_norms(
        problem: Problem,
        optimizer: Optimizer,
        activation: ActivationKind,
        width: usize,
        eta: f64,
        res_norms: &[f64],
    ) -> Self {
        let mut records: Vec<TraceRecord> = res_norms
            .iter()
            .enumerate()
            .map(|(k, &r)| TraceRecord::new(k, 0.5 * r * r, r))
            .collect();
        for k in 1..records.len() {
            let prev = records[k - 1].loss;
            if prev > 0.0 {
                records[k - 1].step_ratio = Some(records[k].loss / prev);
            }
        }
        Self {
            problem,
            optimizer,
            activation,
            width,
            eta,
            iters_requested: res_norms.len().saturating_sub(1),
            stop: StopReason::Completed,
            gram: None,
            records,
        }
    }

    pub fn initial(&self) -> &TraceRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &TraceRecord {
        &self.records[self.records.len() - 1]
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn csv_header(&self) -> &'static str {
        match self.problem {
            Problem::Regression => REGRESSION_CSV_HEADER,
            Problem::Pinn => PINN_CSV_HEADER,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(self.csv_header());
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.iter,
                format_f64(r.loss),
                format_f64(r.res_norm),
                opt(r.step_ratio),
                opt(r.i1_norm)
            );
            if self.problem == Problem::Pinn {
                let _ = write!(out, ",{}", opt(r.lin_defect));
            }
            let _ = writeln!(out, ",{},{}", opt(r.drift_max), opt(r.lambda_min_h));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Records one newly computed state: fills the previous record's step ratio
/// and pushes the new record.
pub(crate) fn push_record(records: &mut Vec<TraceRecord>, rec: TraceRecord) {
    if let Some(prev) = records.last_mut() {
        if prev.loss > 0.0 {
            prev.step_ratio = Some(rec.loss / prev.loss);
        }
    }
    records.push(rec);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layouts() {
        let t = TrainTrace::from_residual_norms(
            Problem::Regression,
            Optimizer::Gd,
            ActivationKind::Relu,
            4,
            0.1,
            &[2.0, 1.0],
        );
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REGRESSION_CSV_HEADER);
        assert_eq!(lines[1], "0,2.0000000000000000e0,2.0000000000000000e0,2.5000000000000000e-1,,,");
        assert_eq!(lines[2].split(',').count(), 7);

        let mut t = t;
        t.problem = Problem::Pinn;
        let csv = t.to_csv();
        assert!(csv.starts_with(PINN_CSV_HEADER));
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 8);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}

/// Learning-rate selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "eta", rename_all = "kebab-case")]
pub enum EtaMode {
    /// GD: `0.5/‖H∞‖₂` from the Gram report; NGD: 0.5.
    Auto,
    Fixed(f64),
}

/// Optional per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Second-order remainder `‖I₁(k)‖₂`.
    pub remainder: bool,
    /// `max_r ‖w_r(k) − w_r(0)‖₂`.
    pub drift: bool,
    /// Finite-width Gram `H(k)` each iteration: `λ_min(H(k))` and the
    /// two-route first-order term cross-check. O(n²m) per step.
    pub gram: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            remainder: true,
            drift: true,
            gram: false,
        }
    }
}

impl Diagnostics {
    pub fn all() -> Self {
        Self {
            remainder: true,
            drift: true,
            gram: true,
        }
    }
}

/// Abort once the loss exceeds this multiple of the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

pub(crate) fn diverged(loss: f64, initial: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE)
}
