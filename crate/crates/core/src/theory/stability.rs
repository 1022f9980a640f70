use rayon::prelude::*;

use super::{ball_point, gate, loglog_slope, window_margin, CheckReport, Quantity, Setting, Verdict};
use crate::error::{validation, Result};
use crate::gram::GramReport;
use crate::network::{ActivationKind, ModelParams};
use crate::numerics::{dot, spectral_norm};
use crate::pinn::{jacobian, PinnDataset};
use crate::rng::{derive_seed, stream, streams};

pub const CONCENTRATION_WINDOW: (f64, f64) = (-0.65, -0.35);
pub const TANH_JACOBIAN_WINDOW: (f64, f64) = (0.85, 1.15);
pub const RELU_CUBED_JACOBIAN_WINDOW: (f64, f64) = (0.35, 0.8);
/// Largest allowed max/min spread of `‖H(w) − H(0)‖_F / R` in PINN mode.
pub const PINN_RATIO_SPREAD: f64 = 3.0;

/// Copy of `params` with every weight row moved by an independent uniform
/// draw from the open ball of radius `radius`.
pub fn perturb_rows(params: &ModelParams, radius: f64, seed: u64) -> Result<ModelParams> {
    if !(radius >= 0.0) {
        return Err(validation(format!("perturbation radius must be nonnegative, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(params.clone());
    }
    let d = params.d_aug();
    let mut rng = stream(seed, streams::PERTURBATION);
    let mut w = params.weights().to_vec();
    for row in w.chunks_mut(d) {
        for (v, dv) in row.iter_mut().zip(ball_point(&mut rng, d, radius)) {
            *v += dv;
        }
    }
    params.with_weights(w)
}

fn perturbation_seed(seed: u64, r_index: usize, p: usize) -> u64 {
    derive_seed(derive_seed(seed, r_index as u64), p as u64)
}

fn check_radii(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(validation("radius grid must be non-empty and inside (0, 1]"));
    }
    Ok(())
}

/// Mean over `trials` initializations of `‖H(0) − H∞‖_F` for each width,
/// with a log-log slope gate and `error(m_max) < λ₀/4`.
///
/// `gram` must be the report for `setting` (closed form for regression,
/// Monte Carlo for PINNs). An unreliable `λ₀` downgrades to report-only.
pub fn check_gram_concentration(
    setting: Setting<'_>,
    gram: &GramReport,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    if m_grid.len() < 4 || m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(validation("m_grid must be strictly ascending with at least 4 widths"));
    }
    if trials == 0 {
        return Err(validation("trials must be at least 1"));
    }
    if gram.dim() != setting.len() {
        return Err(validation("Gram report does not match the dataset"));
    }
    let errors: Vec<f64> = m_grid
        .iter()
        .map(|&m| {
            let per_trial: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let params = setting.init(m, derive_seed(derive_seed(seed, m as u64), t as u64))?;
                    Ok(setting.gram(&params)?.sub(&gram.h_inf).frobenius_norm())
                })
                .collect::<Result<_>>()?;
            Ok(per_trial.iter().sum::<f64>() / trials as f64)
        })
        .collect::<Result<_>>()?;
    let widths: Vec<f64> = m_grid.iter().map(|&m| m as f64).collect();
    let slope = loglog_slope(&widths, &errors)?;
    let (lo, hi) = CONCENTRATION_WINDOW;
    let last = *errors.last().unwrap();
    let quarter = gram.lambda0 / 4.0;
    let slope_ok = slope >= lo && slope <= hi;
    let gate_ok = last < quarter;
    let verdict = if gram.unreliable {
        Verdict::ReportOnly
    } else {
        gate(slope_ok && gate_ok)
    };
    Ok(CheckReport::new(
        "gram_concentration",
        Quantity::scalar(slope),
        Quantity::interval(lo, hi),
        window_margin(slope, lo, hi),
        verdict,
    )
    .with("mode", setting.label())
    .with("m_grid", m_grid)
    .with("mean_frobenius_error", &errors)
    .with("trials", trials)
    .with("seed", seed)
    .with("lambda0", gram.lambda0)
    .with("lambda0_stderr", gram.estimator_stderr)
    .with("lambda0_unreliable", gram.unreliable)
    .with("largest_m_error", last)
    .with("lambda0_quarter", quarter)
    .with("slope_in_window", slope_ok)
    .with("largest_m_below_lambda0_quarter", gate_ok))
}

/// `max_p ‖H(w_p) − H(0)‖_F` over `perturbations` draws at radius `radius`.
pub fn max_gram_deviation(
    setting: Setting<'_>,
    params0: &ModelParams,
    radius: f64,
    perturbations: usize,
    seed: u64,
) -> Result<f64> {
    let h0 = setting.gram(params0)?;
    let devs: Vec<f64> = (0..perturbations)
        .into_par_iter()
        .map(|p| {
            let w = perturb_rows(params0, radius, derive_seed(seed, p as u64))?;
            Ok(setting.gram(&w)?.sub(&h0).frobenius_norm())
        })
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

fn flip_fractions(params0: &ModelParams, params: &ModelParams, points: &[&[f64]]) -> Vec<f64> {
    let d = params0.d_aug();
    let m = params0.width();
    points
        .iter()
        .map(|x| {
            let flips = (0..m)
                .filter(|&r| {
                    let a = dot(&params0.weights()[r * d..(r + 1) * d], x) >= 0.0;
                    let b = dot(&params.weights()[r * d..(r + 1) * d], x) >= 0.0;
                    a != b
                })
                .count();
            flips as f64 / m as f64
        })
        .collect()
}

/// Gram stability under bounded weight perturbations.
///
/// Regression: gates `max ‖H(w) − H(0)‖_F < 8nR` and a per-sample
/// activation-flip fraction `≤ 4R`. PINN: reports `max deviation / R` and
/// passes when its max/min spread over the grid is at most 3.
pub fn check_gram_stability(
    setting: Setting<'_>,
    params0: &ModelParams,
    r_grid: &[f64],
    perturbations: usize,
    seed: u64,
) -> Result<CheckReport> {
    check_radii(r_grid)?;
    if perturbations == 0 {
        return Err(validation("perturbations must be at least 1"));
    }
    let h0 = setting.gram(params0)?;
    let n = setting.len() as f64;

    let mut max_dev = Vec::with_capacity(r_grid.len());
    let mut max_flip = Vec::with_capacity(r_grid.len());
    for (ri, &radius) in r_grid.iter().enumerate() {
        let per: Vec<(f64, f64)> = (0..perturbations)
            .into_par_iter()
            .map(|p| {
                let w = perturb_rows(params0, radius, perturbation_seed(seed, ri, p))?;
                let dev = setting.gram(&w)?.sub(&h0).frobenius_norm();
                let flip = match setting {
                    Setting::Regression(data) => {
                        let pts: Vec<&[f64]> = data.points().iter().map(|x| x.coords()).collect();
                        flip_fractions(params0, &w, &pts).into_iter().fold(0.0, f64::max)
                    }
                    Setting::Pinn { .. } => 0.0,
                };
                Ok((dev, flip))
            })
            .collect::<Result<_>>()?;
        max_dev.push(per.iter().map(|p| p.0).fold(0.0, f64::max));
        max_flip.push(per.iter().map(|p| p.1).fold(0.0, f64::max));
    }

    let base = CheckReport::new("gram_stability", Quantity::scalar(0.0), Quantity::scalar(0.0), 0.0, Verdict::Pass)
        .with("mode", setting.label())
        .with("r_grid", r_grid)
        .with("perturbations", perturbations)
        .with("seed", seed)
        .with("max_frobenius_deviation", &max_dev);
    match setting {
        Setting::Regression(_) => {
            let bounds: Vec<f64> = r_grid.iter().map(|r| 8.0 * n * r).collect();
            let flip_bounds: Vec<f64> = r_grid.iter().map(|r| 4.0 * r).collect();
            let dev_margin = rel_margin(&max_dev, &bounds);
            let flip_margin = rel_margin(&max_flip, &flip_bounds);
            let ok_dev = max_dev.iter().zip(&bounds).all(|(m, b)| m < b);
            let ok_flip = max_flip.iter().zip(&flip_bounds).all(|(m, b)| m <= b);
            Ok(CheckReport {
                measured: Quantity::curve(r_grid.to_vec(), max_dev.clone()),
                bound: Quantity::curve(r_grid.to_vec(), bounds),
                margin: dev_margin.min(flip_margin),
                verdict: gate(ok_dev && ok_flip),
                ..base
            }
            .with("margin_kind", "smallest relative margin over both gates")
            .with("max_flip_fraction", &max_flip)
            .with("flip_fraction_bound", &flip_bounds)
            .with("deviation_gate_ok", ok_dev)
            .with("flip_gate_ok", ok_flip))
        }
        Setting::Pinn { .. } => {
            let ratios: Vec<f64> = max_dev.iter().zip(r_grid).map(|(d, r)| d / r).collect();
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            Ok(CheckReport {
                measured: Quantity::curve(r_grid.to_vec(), ratios),
                bound: Quantity::scalar(PINN_RATIO_SPREAD),
                margin: PINN_RATIO_SPREAD - spread,
                verdict: gate(spread <= PINN_RATIO_SPREAD),
                ..base
            }
            .with("ratio_spread", spread)
            .with("activation", setting.activation()))
        }
    }
}

fn rel_margin(measured: &[f64], bounds: &[f64]) -> f64 {
    measured
        .iter()
        .zip(bounds)
        .map(|(m, b)| (b - m) / b)
        .fold(f64::INFINITY, f64::min)
}

/// `max_p ‖J(w_p) − J(0)‖₂` over `perturbations` draws at radius `radius`.
pub fn max_jacobian_deviation(
    params0: &ModelParams,
    data: &PinnDataset,
    radius: f64,
    perturbations: usize,
    seed: u64,
) -> Result<f64> {
    let j0 = jacobian(params0, data)?;
    let devs: Vec<f64> = (0..perturbations)
        .into_par_iter()
        .map(|p| {
            let w = perturb_rows(params0, radius, derive_seed(seed, p as u64))?;
            Ok(spectral_norm(&jacobian(&w, data)?.sub(&j0)))
        })
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

fn jacobian_window(act: ActivationKind) -> Result<(f64, f64)> {
    match act {
        ActivationKind::SmoothTanh => Ok(TANH_JACOBIAN_WINDOW),
        ActivationKind::ReluCubed => Ok(RELU_CUBED_JACOBIAN_WINDOW),
        ActivationKind::Relu => Err(validation("Jacobian stability needs a PINN activation")),
    }
}

/// Log-log slope of `max ‖J(w) − J(0)‖₂` against `R`, gated by an
/// activation-specific window around the theoretical exponent
/// (1 for tanh, ½ for ReLU³ with allowance for its smooth part).
pub fn check_jacobian_stability(
    params0: &ModelParams,
    data: &PinnDataset,
    r_grid: &[f64],
    perturbations: usize,
    seed: u64,
) -> Result<CheckReport> {
    check_radii(r_grid)?;
    if r_grid.len() < 2 || perturbations == 0 {
        return Err(validation("need at least two radii and one perturbation"));
    }
    let (lo, hi) = jacobian_window(params0.activation())?;
    let devs: Vec<f64> = r_grid
        .iter()
        .enumerate()
        .map(|(ri, &r)| max_jacobian_deviation(params0, data, r, perturbations, derive_seed(seed, ri as u64)))
        .collect::<Result<_>>()?;
    let slope = loglog_slope(r_grid, &devs)?;
    Ok(CheckReport::new(
        "jacobian_stability",
        Quantity::scalar(slope),
        Quantity::interval(lo, hi),
        window_margin(slope, lo, hi),
        gate(slope >= lo && slope <= hi),
    )
    .with("activation", params0.activation())
    .with("width", params0.width())
    .with("r_grid", r_grid)
    .with("max_spectral_deviation", &devs)
    .with("perturbations", perturbations)
    .with("seed", seed))
}

/// Report-only curve of `max ‖J(w) − J(0)‖₂` at a fixed radius across widths.
pub fn jacobian_width_trend(
    data: &PinnDataset,
    activation: ActivationKind,
    widths: &[usize],
    radius: f64,
    perturbations: usize,
    seed: u64,
) -> Result<CheckReport> {
    check_radii(&[radius])?;
    let devs: Vec<f64> = widths
        .iter()
        .map(|&m| {
            let p0 = crate::network::init_params(m, data.d_aug(), activation, derive_seed(seed, m as u64))?;
            max_jacobian_deviation(&p0, data, radius, perturbations, derive_seed(seed, !(m as u64)))
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = widths.iter().map(|&m| m as f64).collect();
    Ok(CheckReport::new(
        "jacobian_width_trend",
        Quantity::curve(x, devs),
        Quantity::Unspecified,
        0.0,
        Verdict::ReportOnly,
    )
    .with("activation", activation)
    .with("radius", radius)
    .with("perturbations", perturbations)
    .with("seed", seed))
}
