use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gate, CheckReport, Quantity, Verdict};
use crate::error::{validation, Result};
use crate::network::{init_params, ActivationKind};
use crate::pinn::{make_instance, pinn_loss, sample_dataset};
use crate::regression::{regression_loss, RegressionDataset};
use crate::rng::derive_seed;

/// Largest allowed max/min ratio of `‖y − u(0)‖² / n` across sizes.
pub const REGRESSION_SCALE_RATIO: f64 = 5.0;
pub const MIN_TRIALS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum InitialScaleMode {
    /// Sizes are sample counts `n`.
    Regression { d: usize, m: usize },
    /// Sizes are spatial dimensions `d`.
    Pinn {
        instance: String,
        n1: usize,
        n2: usize,
        m: usize,
        activation: ActivationKind,
    },
}

fn trial_seed(seed: u64, size: usize, t: usize) -> u64 {
    derive_seed(derive_seed(seed, size as u64), t as u64)
}

/// Initial-loss scaling. Regression: mean `‖y − u(0)‖² / n` over `trials`
/// draws for each `n` in `size_grid`, gated on max/min ≤ 5. PINN: mean
/// `L(0)` for each `d` in `size_grid`, report-only.
pub fn check_initial_scale(mode: &InitialScaleMode, size_grid: &[usize], trials: usize, seed: u64) -> Result<CheckReport> {
    if trials < MIN_TRIALS {
        return Err(validation(format!("initial-scale check needs at least {MIN_TRIALS} trials")));
    }
    if size_grid.is_empty() {
        return Err(validation("size grid is empty"));
    }
    let x: Vec<f64> = size_grid.iter().map(|&s| s as f64).collect();
    match mode {
        InitialScaleMode::Regression { d, m } => {
            let means: Vec<f64> = size_grid
                .iter()
                .map(|&n| {
                    let per: Vec<f64> = (0..trials)
                        .into_par_iter()
                        .map(|t| {
                            let s = trial_seed(seed, n, t);
                            let data = RegressionDataset::sample(n, *d, s)?;
                            let params = init_params(*m, d + 1, ActivationKind::Relu, derive_seed(s, 1))?;
                            Ok(2.0 * regression_loss(&params, &data)? / n as f64)
                        })
                        .collect::<Result<_>>()?;
                    Ok(per.iter().sum::<f64>() / trials as f64)
                })
                .collect::<Result<_>>()?;
            let hi = means.iter().copied().fold(0.0, f64::max);
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let ratio = if lo > 0.0 { hi / lo } else { f64::MAX };
            Ok(CheckReport::new(
                "initial_scale",
                Quantity::curve(x, means),
                Quantity::scalar(REGRESSION_SCALE_RATIO),
                REGRESSION_SCALE_RATIO - ratio,
                gate(ratio <= REGRESSION_SCALE_RATIO),
            )
            .with("problem", "regression")
            .with("d", d)
            .with("m", m)
            .with("trials", trials)
            .with("seed", seed)
            .with("max_min_ratio", ratio))
        }
        InitialScaleMode::Pinn {
            instance,
            n1,
            n2,
            m,
            activation,
        } => {
            let means: Vec<f64> = size_grid
                .iter()
                .map(|&d| {
                    let inst = make_instance(instance, d)?;
                    let per: Vec<f64> = (0..trials)
                        .into_par_iter()
                        .map(|t| {
                            let s = trial_seed(seed, d, t);
                            let data = sample_dataset(&inst, *n1, *n2, s)?;
                            let params = init_params(*m, d + 2, *activation, derive_seed(s, 1))?;
                            pinn_loss(&params, &data)
                        })
                        .collect::<Result<_>>()?;
                    Ok(per.iter().sum::<f64>() / trials as f64)
                })
                .collect::<Result<_>>()?;
            let monotone = means.windows(2).all(|w| w[1] >= w[0]);
            Ok(CheckReport::new(
                "initial_scale",
                Quantity::curve(x, means),
                Quantity::Unspecified,
                0.0,
                Verdict::ReportOnly,
            )
            .with("problem", "pinn")
            .with("instance", instance)
            .with("n1", n1)
            .with("n2", n2)
            .with("m", m)
            .with("activation", activation)
            .with("trials", trials)
            .with("seed", seed)
            .with("increasing_in_d", monotone))
        }
    }
}
