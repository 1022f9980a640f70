use super::*;
use crate::network::{init_params, ActivationKind, AugmentedPoint, ModelParams};
use crate::numerics::finite_diff_grad;
use crate::trace::{Diagnostics, EtaMode, Optimizer, StopReason};
use crate::Error;

fn hand_dataset() -> PinnDataset {
    let p = AugmentedPoint::new(vec![0.5, 0.5, 1.0]).unwrap();
    PinnDataset::new("zero", 1, vec![p], vec![], vec![0.0], vec![]).unwrap()
}

fn desk(act: ActivationKind, m: usize, n: usize, seed: u64) -> (ModelParams, PinnDataset) {
    let inst = make_instance("poly-sine", 1).unwrap();
    let data = sample_dataset(&inst, n, n, seed).unwrap();
    (init_params(m, 3, act, seed + 1).unwrap(), data)
}

#[test]
fn hand_residual() {
    let params = ModelParams::new(1, 3, ActivationKind::ReluCubed, vec![1.0, 1.0, 0.0], vec![1.0]).unwrap();
    let r = residuals(&params, &hand_dataset()).unwrap();
    assert_eq!(r.s, vec![-3.0]);
    assert!(r.h.is_empty());
    assert_eq!(r.loss(), 4.5);
}

#[test]
fn relu_rejected() {
    let (p, d) = desk(ActivationKind::Relu, 4, 3, 0);
    assert!(matches!(residuals(&p, &d), Err(Error::Unsupported(_))));
    assert!(matches!(gram_inf_mc(&d, ActivationKind::Relu, 200, 0), Err(Error::Unsupported(_))));
}

#[test]
fn zero_weights() {
    let inst = make_instance("zero", 1).unwrap();
    let data = sample_dataset(&inst, 4, 4, 2).unwrap();
    let p = ModelParams::new(3, 3, ActivationKind::ReluCubed, vec![0.0; 9], vec![1.0, -1.0, 1.0]).unwrap();
    let (r, j) = residuals_and_jacobian(&p, &data).unwrap();
    assert!(r.stacked().iter().all(|&v| v == 0.0));
    assert!(j.as_slice().iter().all(|&v| v == 0.0));
    assert!(gram_pinn(&j).as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn boundary_row_hand_value() {
    let y = AugmentedPoint::new(vec![0.0, 0.4, 1.0]).unwrap();
    let data = PinnDataset::new("zero", 1, vec![], vec![y.clone()], vec![], vec![0.0]).unwrap();
    let w = [0.3, 0.5, 0.1];
    let p = ModelParams::new(1, 3, ActivationKind::ReluCubed, w.to_vec(), vec![1.0]).unwrap();
    let z: f64 = w.iter().zip(y.coords()).map(|(a, b)| a * b).sum();
    let j = jacobian(&p, &data).unwrap();
    for (k, c) in y.coords().iter().enumerate() {
        assert!((j.row(0)[k] - 3.0 * z * z * c).abs() < 1e-15);
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    for act in [ActivationKind::SmoothTanh, ActivationKind::ReluCubed] {
        let (p, data) = desk(act, 6, 3, 11);
        let j = jacobian(&p, &data).unwrap();
        for row in 0..data.len() {
            let fd = finite_diff_grad(
                |w| residuals(&p.with_weights(w.to_vec()).unwrap(), &data).unwrap().stacked()[row],
                p.weights(),
                1e-5,
            )
            .unwrap();
            let err: f64 = fd.iter().zip(j.row(row)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = j.row(row).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-5 * scale.max(1e-3), "{act:?} row {row}: {err}");
        }
    }
}

#[test]
fn stacking_and_normalization() {
    let (p, data) = desk(ActivationKind::SmoothTanh, 8, 5, 3);
    let r = residuals(&p, &data).unwrap();
    let direct: f64 = 0.5 * (r.s.iter().map(|v| v * v).sum::<f64>() + r.h.iter().map(|v| v * v).sum::<f64>());
    assert!((pinn_loss(&p, &data).unwrap() - direct).abs() <= 1e-12 * direct);

    let doubled = data.with_duplicated_interior();
    let r2 = residuals(&p, &doubled).unwrap();
    for (i, s) in r.s.iter().enumerate() {
        assert!((r2.s[2 * i] - s / 2f64.sqrt()).abs() < 1e-14);
    }
    let interior = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    assert!((interior(&r2.s) - interior(&r.s)).abs() < 1e-12);
}

#[test]
fn gd_step_identities() {
    let (p, data) = desk(ActivationKind::ReluCubed, 8, 4, 5);
    assert_eq!(gd_step_pinn(&p, &data, 0.0).unwrap(), p);
    let eta = 0.01;
    let (r, j) = residuals_and_jacobian(&p, &data).unwrap();
    let g = j.tr_matvec(&r.stacked());
    let next = gd_step_pinn(&p, &data, eta).unwrap();
    for ((a, b), g) in next.weights().iter().zip(p.weights()).zip(&g) {
        assert!((a - b + eta * g).abs() < 1e-12);
    }
    assert!(gd_step_pinn(&p, &data, -1.0).is_err());
}

#[test]
fn ngd_step_linearization() {
    let (p, data) = desk(ActivationKind::SmoothTanh, 256, 4, 7);
    let (next, info) = ngd_step(&p, &data, 1.0).unwrap();
    assert!(!info.ridge_fallback);
    let r0 = residuals(&p, &data).unwrap().norm();
    assert!(info.lin_defect <= 1e-8 * r0);
    let r1 = residuals(&next, &data).unwrap().norm();
    assert!(r1 * 10.0 <= r0, "{r0} -> {r1}");
    assert!(ngd_step(&p, &data, 0.0).is_err());
    assert!(ngd_step(&p, &data, 1.5).is_err());
}

#[test]
fn mc_gram_single_point() {
    let report = gram_inf_mc(&hand_dataset(), ActivationKind::SmoothTanh, 400, 1).unwrap();
    assert_eq!(report.dim(), 1);
    assert!(report.lambda0 > 0.0);
    assert!(gram_inf_mc(&hand_dataset(), ActivationKind::SmoothTanh, 99, 1).is_err());
}

#[test]
fn ngd_training_hits_floor() {
    let (p, data) = desk(ActivationKind::SmoothTanh, 256, 4, 9);
    let settings = TrainSettings {
        optimizer: Optimizer::Ngd,
        eta_mode: EtaMode::Fixed(1.0),
        iters: 30,
        diagnostics: Diagnostics::default(),
    };
    let t = train(&p, &data, settings, None).unwrap();
    assert_eq!(t.stop, StopReason::NumericalFloor);
    assert!(t.last().loss < NUMERICAL_FLOOR);
    assert!(t.records.len() < 31);
}

#[test]
fn gd_auto_needs_gram_and_flat_start() {
    let (p, data) = desk(ActivationKind::ReluCubed, 8, 3, 1);
    let mut settings = TrainSettings {
        optimizer: Optimizer::Gd,
        eta_mode: EtaMode::Auto,
        iters: 1,
        diagnostics: Diagnostics::all(),
    };
    assert!(train(&p, &data, settings, None).is_err());

    let inst = make_instance("zero", 1).unwrap();
    let zdata = sample_dataset(&inst, 3, 3, 4).unwrap();
    let zp = ModelParams::new(2, 3, ActivationKind::ReluCubed, vec![0.0; 6], vec![1.0, -1.0]).unwrap();
    settings.eta_mode = EtaMode::Fixed(0.1);
    let t = train(&zp, &zdata, settings, None).unwrap();
    assert_eq!(t.records.len(), 2);
    assert!(t.records.iter().all(|r| r.loss == 0.0 && r.i1_norm.unwrap_or(0.0) == 0.0));
}
