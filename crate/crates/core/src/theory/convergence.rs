use super::{gate, loglog_slope, CheckReport, Quantity, Verdict};
use crate::error::{Error, Result};
use crate::gram::GramReport;
use crate::network::ActivationKind;
use crate::pinn::NUMERICAL_FLOOR;
use crate::trace::{Optimizer, Problem, StopReason, TrainTrace};

pub const MIN_GD_STEPS: usize = 50;
/// Slack on the NGD linear-rate envelope.
pub const NGD_LINEAR_SLACK: f64 = 1.05;
/// Residual range used for the quadratic-rate fit.
pub const QUADRATIC_WINDOW: (f64, f64) = (1e-12, 1e-1);
pub const QUADRATIC_MIN_SLOPE: f64 = 1.5;
pub const QUADRATIC_TARGET: f64 = 1e-10;
pub const QUADRATIC_MAX_STEPS: usize = 8;
pub const RECURSION_TOL: f64 = 1e-8;
/// Allowed growth between consecutive widths of the normalized PINN drift.
pub const DRIFT_SWEEP_SLACK: f64 = 1.1;

fn require(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(msg.to_string()))
    }
}

fn trace_context(report: CheckReport, trace: &TrainTrace) -> CheckReport {
    report
        .with("problem", trace.problem)
        .with("optimizer", trace.optimizer)
        .with("activation", trace.activation)
        .with("width", trace.width)
        .with("eta", trace.eta)
        .with("steps", trace.steps())
        .with("stop", trace.stop)
}

/// Gradient-descent rate: loss non-increasing at every step and
/// `res(K)² ≤ (1 − ηλ₀/4)^K res(0)²` (half the theoretical rate).
pub fn check_gd_convergence(trace: &TrainTrace, gram: &GramReport) -> Result<CheckReport> {
    require(trace.optimizer == Optimizer::Gd, "GD convergence check needs a GD trace")?;
    if trace.stop == StopReason::Diverged {
        let last = trace.last().loss;
        return Ok(trace_context(
            CheckReport::new(
                "gd_convergence",
                Quantity::scalar(last),
                Quantity::scalar(trace.initial().loss),
                trace.initial().loss - last,
                Verdict::Fail,
            ),
            trace,
        )
        .with("reason", "run diverged"));
    }
    require(trace.steps() >= MIN_GD_STEPS, "GD convergence check needs at least 50 iterations")?;
    let increases: Vec<usize> = trace
        .records
        .windows(2)
        .filter(|w| w[1].loss > w[0].loss)
        .map(|w| w[0].iter)
        .collect();
    let k = trace.steps() as f64;
    let r0 = trace.initial().res_norm.powi(2);
    let rk = trace.last().res_norm.powi(2);
    let rate = 1.0 - trace.eta * gram.lambda0 / 4.0;
    let bound = rate.powf(k) * r0;
    let monotone = increases.is_empty();
    Ok(trace_context(
        CheckReport::new(
            "gd_convergence",
            Quantity::scalar(rk),
            Quantity::scalar(bound),
            bound - rk,
            gate(monotone && rk <= bound),
        ),
        trace,
    )
    .with("initial_residual_sq", r0)
    .with("lambda0", gram.lambda0)
    .with("rate_per_step", rate)
    .with("relaxation", "quarter of eta*lambda0 (half the theoretical rate)")
    .with("loss_increase_at", increases.iter().take(20).collect::<Vec<_>>())
    .with("loss_increases", increases.len()))
}

/// NGD linear rate: `L(k) ≤ 1.05 (1 − η)^k L(0)` for every recorded
/// iteration (traces stop at the numerical floor).
pub fn check_ngd_linear(trace: &TrainTrace, eta: f64) -> Result<CheckReport> {
    require(trace.optimizer == Optimizer::Ngd, "NGD linear check needs an NGD trace")?;
    require(eta > 0.0 && eta < 1.0, "NGD linear check needs eta in (0, 1)")?;
    let l0 = trace.initial().loss;
    let mut worst = f64::INFINITY;
    let mut worst_iter = 0;
    let mut violations = 0;
    for rec in &trace.records {
        let env = NGD_LINEAR_SLACK * (1.0 - eta).powi(rec.iter as i32) * l0;
        let margin = if env > 0.0 {
            (env - rec.loss) / env
        } else if rec.loss == 0.0 {
            0.0
        } else {
            -1.0
        };
        if margin < 0.0 {
            violations += 1;
        }
        if margin < worst {
            worst = margin;
            worst_iter = rec.iter;
        }
    }
    let losses: Vec<f64> = trace.records.iter().map(|r| r.loss).collect();
    let iters: Vec<f64> = trace.records.iter().map(|r| r.iter as f64).collect();
    let envelope: Vec<f64> = iters
        .iter()
        .map(|&k| NGD_LINEAR_SLACK * (1.0 - eta).powi(k as i32) * l0)
        .collect();
    let max_defect = trace
        .records
        .iter()
        .filter_map(|r| r.lin_defect.map(|d| d / r.res_norm.max(f64::MIN_POSITIVE)))
        .fold(0.0, f64::max);
    Ok(trace_context(
        CheckReport::new(
            "ngd_linear",
            Quantity::curve(iters.clone(), losses),
            Quantity::curve(iters, envelope),
            worst,
            gate(violations == 0 && trace.stop != StopReason::Diverged),
        ),
        trace,
    )
    .with("margin_kind", "smallest relative margin to the envelope")
    .with("worst_iter", worst_iter)
    .with("violations", violations)
    .with("slack", NGD_LINEAR_SLACK)
    .with("floor", NUMERICAL_FLOOR)
    .with("max_relative_lin_defect", max_defect)
    .with(
        "ridge_fallbacks",
        trace.records.iter().filter(|r| r.ridge_fallback == Some(true)).count(),
    ))
}

/// Quadratic rate of NGD at η = 1: slope of `ln r(t+1)` against `ln r(t)`
/// over consecutive residuals inside [`QUADRATIC_WINDOW`] at least 1.5, and
/// `r < 1e-10` within 8 steps.
pub fn check_ngd_quadratic(trace: &TrainTrace) -> Result<CheckReport> {
    require(trace.optimizer == Optimizer::Ngd, "quadratic check needs an NGD trace")?;
    require(trace.eta == 1.0, "quadratic check needs eta = 1")?;
    require(
        trace.activation == ActivationKind::SmoothTanh,
        "quadratic check needs the smooth tanh activation",
    )?;
    let (lo, hi) = QUADRATIC_WINDOW;
    let inside = |r: f64| r >= lo && r <= hi;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for w in trace.records.windows(2) {
        if inside(w[0].res_norm) && inside(w[1].res_norm) {
            xs.push(w[0].res_norm);
            ys.push(w[1].res_norm);
        }
    }
    let reached = trace
        .records
        .iter()
        .find(|r| r.res_norm < QUADRATIC_TARGET)
        .map(|r| r.iter);
    let fast = reached.is_some_and(|k| k <= QUADRATIC_MAX_STEPS);
    let report = |slope: Option<f64>, verdict: Verdict| {
        trace_context(
            CheckReport::new(
                "ngd_quadratic",
                slope.map_or(Quantity::Unspecified, Quantity::scalar),
                Quantity::scalar(QUADRATIC_MIN_SLOPE),
                slope.map_or(0.0, |s| s - QUADRATIC_MIN_SLOPE),
                verdict,
            ),
            trace,
        )
        .with("pairs_current", &xs)
        .with("pairs_next", &ys)
        .with("first_iter_below_target", reached)
        .with("target", QUADRATIC_TARGET)
        .with("max_steps", QUADRATIC_MAX_STEPS)
    };
    // consecutive in-window residuals: k pairs use k + 1 points
    if xs.len() < 2 {
        return Ok(report(None, Verdict::ReportOnly).with("reason", "fewer than 3 usable points"));
    }
    let slope = loglog_slope(&xs, &ys)?;
    Ok(report(Some(slope), gate(slope >= QUADRATIC_MIN_SLOPE && fast)))
}

fn drifts(trace: &TrainTrace) -> Result<Vec<f64>> {
    trace
        .records
        .iter()
        .map(|r| r.drift_max)
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Precondition("drift diagnostics were not recorded".into()))
}

/// Regression weight drift: `max_r ‖w_r(k) − w_r(0)‖ ≤ 4√n ‖y − u(0)‖ / (√m λ₀)`
/// at every iteration, with `n` taken from the Gram report.
pub fn check_weight_drift(trace: &TrainTrace, gram: &GramReport) -> Result<CheckReport> {
    require(trace.problem == Problem::Regression, "drift bound applies to regression traces")?;
    let d = drifts(trace)?;
    let n = gram.dim() as f64;
    let m = trace.width as f64;
    let bound = 4.0 * n.sqrt() * trace.initial().res_norm / (m.sqrt() * gram.lambda0);
    let worst = d.iter().copied().fold(0.0, f64::max);
    Ok(trace_context(
        CheckReport::new(
            "weight_drift",
            Quantity::scalar(worst),
            Quantity::scalar(bound),
            bound - worst,
            gate(worst <= bound),
        ),
        trace,
    )
    .with("n", gram.dim())
    .with("lambda0", gram.lambda0)
    .with("initial_residual", trace.initial().res_norm))
}

/// PINN width sweep of the normalized drift `max_k drift(k) · √m · λ₀ / √L(0)`;
/// passes when it does not grow by more than 10% between consecutive widths.
pub fn check_weight_drift_sweep(traces: &[TrainTrace], gram: &GramReport) -> Result<CheckReport> {
    require(traces.len() >= 2, "drift sweep needs at least two widths")?;
    require(
        traces.windows(2).all(|w| w[0].width < w[1].width),
        "drift sweep traces must have ascending widths",
    )?;
    let mut normalized = Vec::with_capacity(traces.len());
    for t in traces {
        let worst = drifts(t)?.into_iter().fold(0.0, f64::max);
        let l0 = t.initial().loss;
        normalized.push(if l0 > 0.0 {
            worst * (t.width as f64).sqrt() * gram.lambda0 / l0.sqrt()
        } else {
            0.0
        });
    }
    let growth = normalized
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else if w[1] == 0.0 { 1.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    let widths: Vec<f64> = traces.iter().map(|t| t.width as f64).collect();
    Ok(CheckReport::new(
        "weight_drift_sweep",
        Quantity::curve(widths, normalized),
        Quantity::scalar(DRIFT_SWEEP_SLACK),
        DRIFT_SWEEP_SLACK - growth,
        gate(growth <= DRIFT_SWEEP_SLACK),
    )
    .with("largest_consecutive_growth", growth)
    .with("lambda0", gram.lambda0)
    .with("lambda0_unreliable", gram.unreliable)
    .with("optimizer", traces[0].optimizer)
    .with("activation", traces[0].activation))
}

/// Residual recursion: at every logged step the two first-order terms agree
/// to `1e-8` relative and `‖I₁(k)‖ ≤ ‖r(k)‖`.
pub fn check_recursion(trace: &TrainTrace) -> Result<CheckReport> {
    require(trace.optimizer == Optimizer::Gd, "recursion check needs a GD trace")?;
    let steps = &trace.records[..trace.records.len().saturating_sub(1)];
    require(!steps.is_empty(), "recursion check needs at least one step")?;
    let mut worst_i2: f64 = 0.0;
    let mut worst_i1_ratio: f64 = 0.0;
    for rec in steps {
        let i1 = rec
            .i1_norm
            .ok_or_else(|| Error::Precondition("remainder diagnostics were not recorded".into()))?;
        let i2 = rec
            .i2_discrepancy
            .ok_or_else(|| Error::Precondition("Gram diagnostics were not recorded".into()))?;
        worst_i2 = worst_i2.max(i2);
        let ratio = if rec.res_norm > 0.0 {
            i1 / rec.res_norm
        } else if i1 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst_i1_ratio = worst_i1_ratio.max(ratio);
    }
    let ok_i2 = worst_i2 <= RECURSION_TOL;
    let ok_i1 = worst_i1_ratio <= 1.0;
    Ok(trace_context(
        CheckReport::new(
            "recursion",
            Quantity::scalar(worst_i2),
            Quantity::scalar(RECURSION_TOL),
            (RECURSION_TOL - worst_i2).min(1.0 - worst_i1_ratio),
            gate(ok_i2 && ok_i1),
        ),
        trace,
    )
    .with("max_first_order_discrepancy", worst_i2)
    .with("max_remainder_to_residual", worst_i1_ratio)
    .with("logged_steps", steps.len()))
}
