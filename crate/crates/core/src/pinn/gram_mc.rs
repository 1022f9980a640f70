use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::dataset::PinnDataset;
use super::residual::{boundary_feature, interior_feature, rows};
use crate::error::{validation, Error, Result};
use crate::gram::{GramReport, GramSource, SUGGESTED_ETA_FACTOR};
use crate::network::ActivationKind;
use crate::numerics::{sym_eig_extremes, DenseMatrix};
use crate::rng::{derive_seed, stream, streams};

pub const DEFAULT_N_MC: usize = 50_000;
pub const JACKKNIFE_GROUPS: usize = 20;
pub const MIN_N_MC: usize = 100;

/// Monte Carlo estimate of the infinite-width PINN Gram matrix
/// `H∞ = E_w[F(w) F(w)ᵀ]`, `F` being the per-neuron Jacobian features.
///
/// Draws are split into 20 groups, each with its own RNG stream; the
/// jackknife over groups gives the standard error of `λ₀`.
pub fn gram_inf_mc(data: &PinnDataset, activation: ActivationKind, n_mc: usize, seed: u64) -> Result<GramReport> {
    if activation == ActivationKind::Relu {
        return Err(Error::Unsupported(
            "PINN Gram matrices need second derivatives; ReLU is not supported".into(),
        ));
    }
    if n_mc < MIN_N_MC {
        return Err(validation(format!("n_mc must be at least {MIN_N_MC}, got {n_mc}")));
    }
    let rows = rows(data);
    let n = rows.len();
    let d = data.d_aug();
    let groups = JACKKNIFE_GROUPS;

    let sums: Vec<(DenseMatrix, usize)> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let count = n_mc / groups + usize::from(g < n_mc % groups);
            let mut rng = stream(derive_seed(seed, g as u64), streams::MONTE_CARLO);
            let mut acc = DenseMatrix::zeros(n, n);
            let mut w = vec![0.0; d];
            let mut feats = vec![0.0; n * d];
            for _ in 0..count {
                for wi in w.iter_mut() {
                    *wi = StandardNormal.sample(&mut rng);
                }
                for (i, &(c, _, norm, interior)) in rows.iter().enumerate() {
                    let f = &mut feats[i * d..(i + 1) * d];
                    if interior {
                        interior_feature(activation, &w, c, Some(f));
                    } else {
                        boundary_feature(activation, &w, c, Some(f));
                    }
                    for v in f.iter_mut() {
                        *v *= norm;
                    }
                }
                for i in 0..n {
                    let fi = &feats[i * d..(i + 1) * d];
                    for j in 0..=i {
                        let fj = &feats[j * d..(j + 1) * d];
                        let v: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
                        acc.row_mut(i)[j] += v;
                    }
                }
            }
            for i in 0..n {
                for j in 0..i {
                    let v = acc.row(i)[j];
                    acc.row_mut(j)[i] = v;
                }
            }
            (acc, count)
        })
        .collect();

    let mut total = DenseMatrix::zeros(n, n);
    for (s, _) in &sums {
        total = total.add(s);
    }
    let h_inf = total.scale(1.0 / n_mc as f64);
    if !h_inf.is_finite() {
        return Err(Error::NonFinite("Monte Carlo Gram estimate".into()));
    }
    let spec = sym_eig_extremes(&h_inf)?;

    let leave_out: Vec<f64> = sums
        .par_iter()
        .map(|(s, count)| {
            let h = total.sub(s).scale(1.0 / (n_mc - count) as f64);
            sym_eig_extremes(&h).map(|e| e.lambda_min)
        })
        .collect::<Result<_>>()?;
    let mean = leave_out.iter().sum::<f64>() / groups as f64;
    let var: f64 = leave_out.iter().map(|l| (l - mean).powi(2)).sum::<f64>();
    let stderr = ((groups - 1) as f64 / groups as f64 * var).sqrt();

    Ok(GramReport {
        source: GramSource::MonteCarlo { n_mc, seed },
        h_inf,
        lambda0: spec.lambda_min,
        spectral_norm_hinf: spec.spectral_norm,
        suggested_eta: SUGGESTED_ETA_FACTOR / spec.spectral_norm,
        concentration_error: None,
        estimator_stderr: stderr,
        unreliable: spec.lambda_min <= 3.0 * stderr,
    })
}
