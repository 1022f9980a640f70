//! L² regression with a two-layer ReLU network trained by full-batch
//! gradient descent.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::gram::{GramReport, GramSource, SUGGESTED_ETA_FACTOR};
use crate::network::{are_parallel, ActivationKind, AugmentedPoint, ModelParams};
use crate::numerics::{dot, norm2, sym_eig_extremes, DenseMatrix};
use crate::rng::{derive_seed, stream, streams};
use crate::trace::{
    diverged, push_record, Diagnostics, EtaMode, Optimizer, Problem, StopReason, TraceRecord, TrainTrace,
};

const MAX_SAMPLING_ATTEMPTS: usize = 100;

/// Training pairs `(x̃_i, y_i)` with `‖x̃_i‖ ≤ √2`, `|y_i| ≤ 1` and no two
/// parallel inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    points: Vec<AugmentedPoint>,
    targets: Vec<f64>,
}

impl RegressionDataset {
    pub fn new(points: Vec<AugmentedPoint>, targets: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(validation("regression dataset needs at least one sample"));
        }
        if points.len() != targets.len() {
            return Err(validation(format!(
                "{} points but {} targets",
                points.len(),
                targets.len()
            )));
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(validation("points have inconsistent dimensions"));
        }
        if let Some(i) = targets.iter().position(|y| !(y.abs() <= 1.0)) {
            return Err(validation(format!("target {i} = {} is outside [-1, 1]", targets[i])));
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if are_parallel(points[i].coords(), points[j].coords()) {
                    return Err(validation(format!("samples {i} and {j} are parallel")));
                }
            }
        }
        Ok(Self { points, targets })
    }

    /// `n` inputs uniform on the unit sphere of `ℝ^d` (augmented norm √2)
    /// with targets uniform on `[−1, 1]`.
    pub fn sample(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(validation("sample needs n >= 1 and d >= 1"));
        }
        let mut last_err = String::new();
        for attempt in 0..MAX_SAMPLING_ATTEMPTS {
            let mut rng = stream(derive_seed(seed, attempt as u64), streams::DATASET);
            let mut points = Vec::with_capacity(n);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let nx = norm2(&x);
                if nx == 0.0 {
                    x[0] = 1.0;
                } else {
                    for v in &mut x {
                        *v /= nx;
                    }
                }
                points.push(AugmentedPoint::augment(&x)?);
                targets.push(rng.random_range(-1.0..=1.0));
            }
            match Self::new(points, targets) {
                Ok(ds) => return Ok(ds),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::DegenerateDataset {
            attempts: MAX_SAMPLING_ATTEMPTS,
            reason: last_err,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[AugmentedPoint] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Same inputs, different targets.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), targets)
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.d_aug() != self.dim() {
            return Err(validation(format!(
                "network expects dimension {}, dataset has {}",
                params.d_aug(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Pre-activations `z_ir = w_rᵀ x̃_i`, row-major `n × m`.
fn preactivations(params: &ModelParams, data: &RegressionDataset) -> Vec<f64> {
    let m = params.width();
    let mut z = vec![0.0; data.len() * m];
    z.par_chunks_mut(m).zip(data.points.par_iter()).for_each(|(zi, x)| {
        for (r, v) in zi.iter_mut().enumerate() {
            *v = dot(params.row(r), x.coords());
        }
    });
    z
}

fn outputs_from_preact(params: &ModelParams, z: &[f64]) -> Vec<f64> {
    let m = params.width();
    let act = params.activation();
    let scale = params.inv_sqrt_m();
    z.par_chunks(m)
        .map(|zi| {
            zi.iter()
                .zip(params.signs())
                .map(|(&z, &a)| a * act.value(z))
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// Network predictions `u_i = f(x̃_i)`.
pub fn predictions(params: &ModelParams, data: &RegressionDataset) -> Result<Vec<f64>> {
    data.check_params(params)?;
    Ok(outputs_from_preact(params, &preactivations(params, data)))
}

/// `Σ_i ½ (f(x̃_i) − y_i)²`.
pub fn regression_loss(params: &ModelParams, data: &RegressionDataset) -> Result<f64> {
    let u = predictions(params, data)?;
    Ok(0.5 * u.iter().zip(&data.targets).map(|(u, y)| (u - y) * (u - y)).sum::<f64>())
}

fn require_relu(params: &ModelParams) -> Result<()> {
    if params.activation() != ActivationKind::Relu {
        return Err(Error::Unsupported(format!(
            "the regression Gram matrix is defined for relu, got {}",
            params.activation()
        )));
    }
    Ok(())
}

/// Activation patterns `1{z_ir ≥ 0}` packed into 64-bit words per sample.
fn activation_bits(z: &[f64], m: usize) -> Vec<Vec<u64>> {
    z.chunks(m)
        .map(|zi| {
            let mut bits = vec![0u64; m.div_ceil(64)];
            for (r, &v) in zi.iter().enumerate() {
                if v >= 0.0 {
                    bits[r / 64] |= 1 << (r % 64);
                }
            }
            bits
        })
        .collect()
}

fn gram_from_bits(data: &RegressionDataset, bits: &[Vec<u64>], m: usize) -> DenseMatrix {
    let n = data.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let both: u32 = bits[i].iter().zip(&bits[j]).map(|(a, b)| (a & b).count_ones()).sum();
                    dot(data.points[i].coords(), data.points[j].coords()) * both as f64 / m as f64
                })
                .collect()
        })
        .collect();
    DenseMatrix::from_rows(&rows).expect("gram rows are square and finite")
}

/// Finite-width Gram matrix
/// `H_ij = (1/m) x̃_iᵀx̃_j Σ_r 1{w_rᵀx̃_i ≥ 0} 1{w_rᵀx̃_j ≥ 0}`.
pub fn gram_finite(params: &ModelParams, data: &RegressionDataset) -> Result<DenseMatrix> {
    require_relu(params)?;
    data.check_params(params)?;
    let z = preactivations(params, data);
    Ok(gram_from_bits(data, &activation_bits(&z, params.width()), params.width()))
}

/// Closed-form infinite-width ReLU kernel
/// `H∞_ij = x̃_iᵀx̃_j (π − θ_ij) / 2π` and its spectral summary.
pub fn gram_inf_relu(data: &RegressionDataset) -> Result<GramReport> {
    let n = data.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if are_parallel(data.points[i].coords(), data.points[j].coords()) {
                return Err(validation(format!("samples {i} and {j} are parallel")));
            }
        }
    }
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = relu_kernel(data.points[i].coords(), data.points[j].coords());
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let spec = sym_eig_extremes(&h)?;
    Ok(GramReport {
        source: GramSource::ClosedForm,
        lambda0: spec.lambda_min,
        spectral_norm_hinf: spec.spectral_norm,
        suggested_eta: SUGGESTED_ETA_FACTOR / spec.spectral_norm,
        h_inf: h,
        concentration_error: None,
        estimator_stderr: 0.0,
        unreliable: false,
    })
}

/// `E_w[1{wᵀx ≥ 0} 1{wᵀy ≥ 0}] xᵀy` for `w ~ N(0, I)`.
pub fn relu_kernel(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (norm2(x), norm2(y));
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    // half-angle form stays accurate near θ = 0 and θ = π, unlike acos
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    let theta = 2.0 * diff.sqrt().atan2(sum.sqrt());
    dot(x, y) * (PI - theta) / (2.0 * PI)
}

/// `∂L/∂w`, row-major like the weights, from cached pre-activations.
fn loss_gradient(params: &ModelParams, data: &RegressionDataset, z: &[f64], u: &[f64]) -> Vec<f64> {
    let m = params.width();
    let d = params.d_aug();
    let act = params.activation();
    let scale = params.inv_sqrt_m();
    let err: Vec<f64> = u.iter().zip(&data.targets).map(|(u, y)| u - y).collect();
    let mut g = vec![0.0; m * d];
    g.par_chunks_mut(d).enumerate().for_each(|(r, block)| {
        let c = params.signs()[r] * scale;
        for (i, x) in data.points.iter().enumerate() {
            let s = act.first(z[i * m + r]);
            if s != 0.0 && err[i] != 0.0 {
                let coef = c * err[i] * s;
                for (b, xi) in block.iter_mut().zip(x.coords()) {
                    *b += coef * xi;
                }
            }
        }
    });
    g
}

/// One full-batch step `w_r ← w_r − η (a_r/√m) Σ_i (f(x̃_i) − y_i) x̃_i σ′(w_rᵀx̃_i)`.
pub fn gd_step(params: &ModelParams, data: &RegressionDataset, eta: f64) -> Result<ModelParams> {
    if !(eta >= 0.0) {
        return Err(validation(format!("learning rate must be nonnegative, got {eta}")));
    }
    data.check_params(params)?;
    let z = preactivations(params, data);
    let u = outputs_from_preact(params, &z);
    let g = loss_gradient(params, data, &z, &u);
    step_weights(params, &g, eta)
}

fn step_weights(params: &ModelParams, grad: &[f64], eta: f64) -> Result<ModelParams> {
    let w: Vec<f64> = params.weights().iter().zip(grad).map(|(w, g)| w - eta * g).collect();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weights after gradient step".into()));
    }
    params.with_weights(w)
}

/// `⟨∂u_i/∂w, Δw⟩` for every sample, evaluated at the pre-step weights.
fn first_order_term(params: &ModelParams, data: &RegressionDataset, z: &[f64], dw: &[f64]) -> Vec<f64> {
    let m = params.width();
    let d = params.d_aug();
    let act = params.activation();
    let scale = params.inv_sqrt_m();
    data.points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut s = 0.0;
            for r in 0..m {
                let sp = act.first(z[i * m + r]);
                if sp != 0.0 {
                    s += params.signs()[r] * sp * dot(x.coords(), &dw[r * d..(r + 1) * d]);
                }
            }
            s * scale
        })
        .collect()
}

/// Relative distance `‖a − b‖ / ‖b‖` (absolute when `b = 0`).
pub(crate) fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb > 0.0 {
        diff / nb
    } else {
        diff
    }
}

/// Runs `iters` gradient-descent steps and records the trace.
///
/// The closed-form Gram report is always computed and attached to the trace;
/// `EtaMode::Auto` takes its `suggested_eta`. With `diagnostics.remainder`
/// the remainder `I₁(k) = u(k+1) − u(k) − ⟨∂u(k)/∂w, Δw⟩` is logged; with
/// `diagnostics.gram` the first-order term is also recomputed as
/// `η H(k)(y − u(k))` and the relative disagreement stored.
pub fn train_gd(
    params0: &ModelParams,
    data: &RegressionDataset,
    eta_mode: EtaMode,
    iters: usize,
    diagnostics: Diagnostics,
) -> Result<TrainTrace> {
    if iters == 0 {
        return Err(validation("iters must be at least 1"));
    }
    data.check_params(params0)?;
    if diagnostics.gram {
        require_relu(params0)?;
    }
    let gram = gram_inf_relu(data)?;
    let eta = match eta_mode {
        EtaMode::Auto => gram.suggested_eta,
        EtaMode::Fixed(eta) if eta >= 0.0 && eta.is_finite() => eta,
        EtaMode::Fixed(eta) => return Err(validation(format!("invalid fixed learning rate {eta}"))),
    };
    let m = params0.width();
    let y = &data.targets;

    let mut trace = TrainTrace {
        problem: Problem::Regression,
        optimizer: Optimizer::Gd,
        activation: params0.activation(),
        width: m,
        eta,
        iters_requested: iters,
        stop: StopReason::Completed,
        gram: Some(gram),
        records: Vec::with_capacity(iters + 1),
    };

    let mut params = params0.clone();
    let mut z = preactivations(&params, data);
    let mut u = outputs_from_preact(&params, &z);
    let residual = |u: &[f64]| -> Vec<f64> { y.iter().zip(u).map(|(y, u)| y - u).collect() };

    let mut rec = state_record(0, &residual(&u), &params, params0, data, &z, diagnostics);
    let loss0 = rec.loss;

    for k in 0..iters {
        let e = residual(&u);
        let g = loss_gradient(&params, data, &z, &u);
        let next = step_weights(&params, &g, eta)?;
        let dw: Vec<f64> = next.weights().iter().zip(params.weights()).map(|(a, b)| a - b).collect();
        let z_next = preactivations(&next, data);
        let u_next = outputs_from_preact(&next, &z_next);

        if diagnostics.remainder || diagnostics.gram {
            let i2 = first_order_term(&params, data, &z, &dw);
            if diagnostics.remainder {
                let i1: Vec<f64> = u_next.iter().zip(&u).zip(&i2).map(|((a, b), c)| a - b - c).collect();
                rec.i1_norm = Some(norm2(&i1));
            }
            if diagnostics.gram {
                let h = gram_from_bits(data, &activation_bits(&z, m), m);
                let he = h.matvec(&e);
                let i2_gram: Vec<f64> = he.iter().map(|v| eta * v).collect();
                rec.i2_discrepancy = Some(relative_gap(&i2, &i2_gram));
            }
        }
        push_record(&mut trace.records, rec);

        params = next;
        z = z_next;
        u = u_next;
        rec = state_record(k + 1, &residual(&u), &params, params0, data, &z, diagnostics);
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

fn state_record(
    k: usize,
    e: &[f64],
    params: &ModelParams,
    params0: &ModelParams,
    data: &RegressionDataset,
    z: &[f64],
    diagnostics: Diagnostics,
) -> TraceRecord {
    let res = norm2(e);
    let mut rec = TraceRecord::new(k, 0.5 * res * res, res);
    if diagnostics.drift {
        rec.drift_max = Some(params.max_row_distance(params0));
    }
    if diagnostics.gram {
        let m = params.width();
        let h = gram_from_bits(data, &activation_bits(z, m), m);
        rec.lambda_min_h = sym_eig_extremes(&h).ok().map(|s| s.lambda_min);
    }
    rec
}
