use serde::{Deserialize, Serialize};

use super::{
    check_gd_convergence, check_gram_concentration, check_gram_stability, check_initial_scale,
    check_jacobian_stability, check_ngd_linear, check_ngd_quadratic, check_recursion, check_weight_drift,
    check_weight_drift_sweep, jacobian_width_trend, rollup, CheckReport, InitialScaleMode, Setting, Verdict,
};
use crate::error::Result;
use crate::network::{init_params, ActivationKind};
use crate::pinn::{gram_inf_mc, make_instance, sample_dataset, train, PinnDataset, TrainSettings};
use crate::regression::{gram_inf_relu, train_gd, RegressionDataset};
use crate::rng::derive_seed;
use crate::trace::{Diagnostics, EtaMode, Optimizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteProfile {
    /// Desk-scale sizes used for the acceptance experiments.
    Full,
    /// Reduced sizes for smoke runs.
    Quick,
}

/// Every size the suite uses; resolved from a profile and echoed into the
/// report so runs can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub profile: SuiteProfile,
    pub seed: u64,
    pub n_mc: usize,
    pub concentration_n: usize,
    pub concentration_d: usize,
    pub concentration_widths: Vec<usize>,
    pub concentration_trials: usize,
    pub pinn_concentration_points: usize,
    pub pinn_concentration_trials: usize,
    pub stability_n: usize,
    pub stability_d: usize,
    pub stability_m: usize,
    pub stability_radii: Vec<f64>,
    pub stability_perturbations: usize,
    pub pinn_points: usize,
    pub pinn_m: usize,
    pub jacobian_radii: Vec<f64>,
    pub jacobian_perturbations: usize,
    pub jacobian_trend_widths: Vec<usize>,
    pub gd_n: usize,
    pub gd_d: usize,
    pub gd_m: usize,
    pub gd_iters: usize,
    pub pinn_gd_iters: usize,
    pub ngd_iters: usize,
    pub drift_widths: Vec<usize>,
    pub drift_iters: usize,
    pub scale_sizes: Vec<usize>,
    pub scale_dims: Vec<usize>,
    pub scale_m: usize,
    pub scale_trials: usize,
}

impl SuiteConfig {
    pub fn for_profile(profile: SuiteProfile, seed: u64, n_mc: usize) -> Self {
        match profile {
            SuiteProfile::Full => Self {
                profile,
                seed,
                n_mc,
                concentration_n: 10,
                concentration_d: 40,
                concentration_widths: (7..=14).map(|k| 1 << k).collect(),
                concentration_trials: 20,
                pinn_concentration_points: 8,
                pinn_concentration_trials: 20,
                stability_n: 10,
                stability_d: 2,
                stability_m: 4096,
                stability_radii: vec![0.01, 0.05],
                stability_perturbations: 20,
                pinn_points: 16,
                pinn_m: 4096,
                jacobian_radii: vec![0.01, 0.02, 0.05, 0.1, 0.2],
                jacobian_perturbations: 5,
                jacobian_trend_widths: vec![1024, 4096, 16384],
                gd_n: 20,
                gd_d: 2,
                gd_m: 4096,
                gd_iters: 500,
                pinn_gd_iters: 200,
                ngd_iters: 200,
                drift_widths: vec![1024, 4096, 16384],
                drift_iters: 100,
                scale_sizes: vec![16, 64, 256],
                scale_dims: vec![1, 2, 3],
                scale_m: 1024,
                scale_trials: 40,
            },
            SuiteProfile::Quick => Self {
                profile,
                seed,
                n_mc,
                concentration_n: 6,
                concentration_d: 20,
                concentration_widths: (6..=10).map(|k| 1 << k).collect(),
                concentration_trials: 5,
                pinn_concentration_points: 4,
                pinn_concentration_trials: 3,
                stability_n: 6,
                stability_d: 2,
                stability_m: 1024,
                stability_radii: vec![0.01, 0.05],
                stability_perturbations: 5,
                pinn_points: 6,
                pinn_m: 512,
                jacobian_radii: vec![0.01, 0.03, 0.1],
                jacobian_perturbations: 2,
                jacobian_trend_widths: vec![256, 1024],
                gd_n: 8,
                gd_d: 2,
                gd_m: 1024,
                gd_iters: 60,
                pinn_gd_iters: 60,
                ngd_iters: 60,
                drift_widths: vec![256, 1024],
                drift_iters: 20,
                scale_sizes: vec![16, 64],
                scale_dims: vec![1, 2],
                scale_m: 256,
                scale_trials: 5,
            },
        }
    }

    fn sub(&self, tag: u64) -> u64 {
        derive_seed(self.seed, tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub checks: Vec<CheckReport>,
    pub overall: Verdict,
}

fn pinn_problem(points: usize, seed: u64) -> Result<PinnDataset> {
    sample_dataset(&make_instance("poly-sine", 1)?, points, points, seed)
}

/// Runs every check at the sizes in `config`, in a fixed order.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let c = config;
    let mut checks = Vec::new();

    let conc = RegressionDataset::sample(c.concentration_n, c.concentration_d, c.sub(1))?;
    let conc_gram = gram_inf_relu(&conc)?;
    checks.push(check_gram_concentration(
        Setting::Regression(&conc),
        &conc_gram,
        &c.concentration_widths,
        c.concentration_trials,
        c.sub(2),
    )?);

    let pconc = pinn_problem(c.pinn_concentration_points, c.sub(3))?;
    let pconc_gram = gram_inf_mc(&pconc, ActivationKind::ReluCubed, c.n_mc, c.sub(4))?;
    checks.push(check_gram_concentration(
        Setting::Pinn {
            data: &pconc,
            activation: ActivationKind::ReluCubed,
        },
        &pconc_gram,
        &c.concentration_widths,
        c.pinn_concentration_trials,
        c.sub(5),
    )?);

    let stab = RegressionDataset::sample(c.stability_n, c.stability_d, c.sub(6))?;
    let stab_p0 = init_params(c.stability_m, stab.dim(), ActivationKind::Relu, c.sub(7))?;
    checks.push(check_gram_stability(
        Setting::Regression(&stab),
        &stab_p0,
        &c.stability_radii,
        c.stability_perturbations,
        c.sub(8),
    )?);

    let pinn = pinn_problem(c.pinn_points, c.sub(9))?;
    for (i, act) in [ActivationKind::SmoothTanh, ActivationKind::ReluCubed].into_iter().enumerate() {
        let p0 = init_params(c.pinn_m, pinn.d_aug(), act, c.sub(10 + i as u64))?;
        checks.push(check_jacobian_stability(
            &p0,
            &pinn,
            &c.jacobian_radii,
            c.jacobian_perturbations,
            c.sub(12 + i as u64),
        )?);
    }
    checks.push(jacobian_width_trend(
        &pinn,
        ActivationKind::ReluCubed,
        &c.jacobian_trend_widths,
        c.jacobian_radii[c.jacobian_radii.len() / 2],
        c.jacobian_perturbations,
        c.sub(14),
    )?);
    let pstab_p0 = init_params(c.pinn_m, pinn.d_aug(), ActivationKind::ReluCubed, c.sub(15))?;
    checks.push(check_gram_stability(
        Setting::Pinn {
            data: &pinn,
            activation: ActivationKind::ReluCubed,
        },
        &pstab_p0,
        &c.jacobian_radii,
        c.jacobian_perturbations,
        c.sub(16),
    )?);

    let gd_data = RegressionDataset::sample(c.gd_n, c.gd_d, c.sub(17))?;
    let gd_p0 = init_params(c.gd_m, gd_data.dim(), ActivationKind::Relu, c.sub(18))?;
    let gd_trace = train_gd(&gd_p0, &gd_data, EtaMode::Auto, c.gd_iters, Diagnostics::all())?;
    let gd_gram = gd_trace.gram.clone().expect("regression traces carry their Gram report");
    checks.push(check_gd_convergence(&gd_trace, &gd_gram)?);
    checks.push(check_recursion(&gd_trace)?);
    checks.push(check_weight_drift(&gd_trace, &gd_gram)?);

    let pinn_gram = gram_inf_mc(&pinn, ActivationKind::ReluCubed, c.n_mc, c.sub(19))?;
    let pgd_p0 = init_params(c.pinn_m, pinn.d_aug(), ActivationKind::ReluCubed, c.sub(20))?;
    let gd_settings = |iters| TrainSettings {
        optimizer: Optimizer::Gd,
        eta_mode: EtaMode::Auto,
        iters,
        diagnostics: Diagnostics::all(),
    };
    let pgd = train(&pgd_p0, &pinn, gd_settings(c.pinn_gd_iters), Some(&pinn_gram))?;
    checks.push(check_gd_convergence(&pgd, &pinn_gram)?);
    checks.push(check_recursion(&pgd)?);

    for (i, act) in [ActivationKind::ReluCubed, ActivationKind::SmoothTanh].into_iter().enumerate() {
        let p0 = init_params(c.pinn_m, pinn.d_aug(), act, c.sub(21 + i as u64))?;
        let settings = TrainSettings {
            optimizer: Optimizer::Ngd,
            eta_mode: EtaMode::Fixed(0.5),
            iters: c.ngd_iters,
            diagnostics: Diagnostics::default(),
        };
        let t = train(&p0, &pinn, settings, None)?;
        checks.push(check_ngd_linear(&t, 0.5)?);
    }
    let q0 = init_params(c.pinn_m, pinn.d_aug(), ActivationKind::SmoothTanh, c.sub(23))?;
    let quad = train(
        &q0,
        &pinn,
        TrainSettings {
            optimizer: Optimizer::Ngd,
            eta_mode: EtaMode::Fixed(1.0),
            iters: c.ngd_iters,
            diagnostics: Diagnostics::default(),
        },
        None,
    )?;
    checks.push(check_ngd_quadratic(&quad)?);

    let drift_traces: Vec<_> = c
        .drift_widths
        .iter()
        .map(|&m| {
            let p0 = init_params(m, pinn.d_aug(), ActivationKind::ReluCubed, derive_seed(c.sub(24), m as u64))?;
            let settings = TrainSettings {
                diagnostics: Diagnostics::default(),
                ..gd_settings(c.drift_iters)
            };
            train(&p0, &pinn, settings, Some(&pinn_gram))
        })
        .collect::<Result<_>>()?;
    checks.push(check_weight_drift_sweep(&drift_traces, &pinn_gram)?);

    checks.push(check_initial_scale(
        &InitialScaleMode::Regression {
            d: c.gd_d,
            m: c.scale_m,
        },
        &c.scale_sizes,
        c.scale_trials,
        c.sub(25),
    )?);
    checks.push(check_initial_scale(
        &InitialScaleMode::Pinn {
            instance: "poly-sine".into(),
            n1: c.pinn_concentration_points,
            n2: c.pinn_concentration_points,
            m: c.scale_m,
            activation: ActivationKind::ReluCubed,
        },
        &c.scale_dims,
        c.scale_trials,
        c.sub(26),
    )?);

    let overall = rollup(&checks);
    Ok(SuiteReport {
        config: config.clone(),
        checks,
        overall,
    })
}
