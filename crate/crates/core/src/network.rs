//! Two-layer networks `f(x) = (1/√m) Σ_r a_r σ(w_rᵀ x̃)` with a fixed output
//! layer of signs and a trainable hidden layer.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::numerics::dot;
use crate::rng::{stream, streams};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    /// `max(z, 0)`; only σ and σ′ are available.
    Relu,
    /// `max(z, 0)³` with no normalizing constant.
    ReluCubed,
    /// `tanh(z)`: analytic, non-polynomial, all derivatives bounded.
    SmoothTanh,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::ReluCubed => "relu-cubed",
            Self::SmoothTanh => "smooth-tanh",
        }
    }

    pub fn max_order(self) -> u8 {
        match self {
            Self::Relu => 1,
            Self::ReluCubed | Self::SmoothTanh => 3,
        }
    }

    /// `σ^(order)(z)`. Indicators are closed at zero: `1{z ≥ 0}`.
    pub fn eval(self, order: u8, z: f64) -> Result<f64> {
        if order > self.max_order() {
            return Err(Error::UnsupportedDerivative {
                activation: self.name(),
                order,
            });
        }
        Ok(self.derivatives(z)[order as usize])
    }

    /// `[σ, σ′, σ″, σ‴]` at `z`. For ReLU the last two slots are zero and
    /// must not be relied upon.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Self::Relu => {
                if z >= 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    [0.0; 4]
                }
            }
            Self::ReluCubed => {
                if z >= 0.0 {
                    [z * z * z, 3.0 * z * z, 6.0 * z, 6.0]
                } else {
                    [0.0; 4]
                }
            }
            Self::SmoothTanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (4.0 * t * t - 2.0 * s)]
            }
        }
    }

    #[inline]
    pub(crate) fn value(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::ReluCubed => {
                if z >= 0.0 {
                    z * z * z
                } else {
                    0.0
                }
            }
            Self::SmoothTanh => z.tanh(),
        }
    }

    #[inline]
    pub(crate) fn first(self, z: f64) -> f64 {
        match self {
            Self::Relu => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::ReluCubed => {
                if z >= 0.0 {
                    3.0 * z * z
                } else {
                    0.0
                }
            }
            Self::SmoothTanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "relu-cubed" | "relu3" => Ok(Self::ReluCubed),
            "smooth-tanh" | "tanh" => Ok(Self::SmoothTanh),
            other => Err(validation(format!(
                "unknown activation `{other}` (expected relu, relu3, tanh)"
            ))),
        }
    }
}

/// Input with a trailing constant 1 so the bias lives in the weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AugmentedPoint(Vec<f64>);

/// Largest allowed augmented norm, `√2`, with rounding slack.
pub const MAX_AUGMENTED_NORM: f64 = std::f64::consts::SQRT_2 * (1.0 + 1e-12);

impl AugmentedPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(validation("augmented point needs at least 2 coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(validation("augmented point has non-finite coordinates"));
        }
        if coords[coords.len() - 1] != 1.0 {
            return Err(validation("augmented point must end with the constant 1"));
        }
        let norm = dot(&coords, &coords).sqrt();
        if norm > MAX_AUGMENTED_NORM {
            return Err(validation(format!("augmented point norm {norm} exceeds sqrt(2)")));
        }
        Ok(Self(coords))
    }

    /// Appends the bias coordinate to a raw input.
    pub fn augment(raw: &[f64]) -> Result<Self> {
        let mut v = raw.to_vec();
        v.push(1.0);
        Self::new(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

impl TryFrom<Vec<f64>> for AugmentedPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AugmentedPoint> for Vec<f64> {
    fn from(p: AugmentedPoint) -> Self {
        p.0
    }
}

/// True when two points are parallel: normalized dot product within
/// `1e-12` of ±1.
pub fn are_parallel(a: &[f64], b: &[f64]) -> bool {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return true;
    }
    let c = dot(a, b) / (na * nb);
    (c.abs() - 1.0).abs() <= 1e-12
}

/// Hidden weights `w_r` (rows of an `m × d_aug` matrix), fixed output signs
/// `a_r ∈ {−1, +1}` and the activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    m: usize,
    d_aug: usize,
    activation: ActivationKind,
    weights: Vec<f64>,
    signs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    m: usize,
    d_aug: usize,
    activation: ActivationKind,
    weights: Vec<f64>,
    signs: Vec<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        Self::new(r.m, r.d_aug, r.activation, r.weights, r.signs)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        Self {
            m: p.m,
            d_aug: p.d_aug,
            activation: p.activation,
            weights: p.weights,
            signs: p.signs,
        }
    }
}

impl ModelParams {
    pub fn new(
        m: usize,
        d_aug: usize,
        activation: ActivationKind,
        weights: Vec<f64>,
        signs: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(validation("hidden width m must be at least 1"));
        }
        if d_aug < 2 {
            return Err(validation("augmented dimension must be at least 2"));
        }
        if weights.len() != m * d_aug {
            return Err(validation(format!(
                "expected {} weights for m={m}, d_aug={d_aug}, got {}",
                m * d_aug,
                weights.len()
            )));
        }
        if signs.len() != m {
            return Err(validation(format!("expected {m} signs, got {}", signs.len())));
        }
        if signs.iter().any(|&a| a != 1.0 && a != -1.0) {
            return Err(validation("output signs must be -1 or +1"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(validation("weights must be finite"));
        }
        Ok(Self {
            m,
            d_aug,
            activation,
            weights,
            signs,
        })
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn d_aug(&self) -> usize {
        self.d_aug
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.d_aug..(r + 1) * self.d_aug]
    }

    /// Same signs and activation, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.m, self.d_aug, self.activation, weights, self.signs.clone())
    }

    /// Same weights and signs, different activation.
    pub fn with_activation(&self, activation: ActivationKind) -> Self {
        Self {
            activation,
            ..self.clone()
        }
    }

    /// `max_r ‖w_r − w′_r‖₂`.
    pub fn max_row_distance(&self, other: &ModelParams) -> f64 {
        assert_eq!(self.weights.len(), other.weights.len());
        self.weights
            .chunks(self.d_aug)
            .zip(other.weights.chunks(self.d_aug))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_aug {
            return Err(validation(format!(
                "point has dimension {}, network expects {}",
                x.len(),
                self.d_aug
            )));
        }
        Ok(())
    }

    pub(crate) fn inv_sqrt_m(&self) -> f64 {
        1.0 / (self.m as f64).sqrt()
    }
}

/// Standard-normal hidden weights and uniform ±1 signs from independent
/// seeded streams.
pub fn init_params(m: usize, d_aug: usize, activation: ActivationKind, seed: u64) -> Result<ModelParams> {
    if m == 0 {
        return Err(validation("hidden width m must be at least 1"));
    }
    if d_aug < 2 {
        return Err(validation("augmented dimension must be at least 2"));
    }
    let mut wrng = stream(seed, streams::WEIGHTS);
    let weights: Vec<f64> = (0..m * d_aug).map(|_| wrng.sample(StandardNormal)).collect();
    let mut srng = stream(seed, streams::SIGNS);
    let signs: Vec<f64> = (0..m)
        .map(|_| if srng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    ModelParams::new(m, d_aug, activation, weights, signs)
}

/// Network output at one augmented point.
pub fn forward(params: &ModelParams, x: &AugmentedPoint) -> Result<f64> {
    forward_raw(params, x.coords())
}

/// Network output at raw coordinates (no augmentation checks beyond the
/// dimension); used by finite-difference probes.
pub fn forward_raw(params: &ModelParams, x: &[f64]) -> Result<f64> {
    params.check_point(x)?;
    let act = params.activation;
    let s: f64 = (0..params.m)
        .map(|r| params.signs[r] * act.value(dot(params.row(r), x)))
        .sum();
    Ok(s * params.inv_sqrt_m())
}

/// Outputs at many points, evaluated in parallel over points.
pub fn forward_batch(params: &ModelParams, points: &[AugmentedPoint]) -> Result<Vec<f64>> {
    points.par_iter().map(|p| forward(params, p)).collect()
}

/// `∂f/∂w` at `x`, laid out row-major like the weights: block `r` is
/// `(a_r/√m) σ′(w_rᵀx̃) x̃`.
pub fn output_grad(params: &ModelParams, x: &AugmentedPoint) -> Result<Vec<f64>> {
    let xc = x.coords();
    params.check_point(xc)?;
    let act = params.activation;
    let scale = params.inv_sqrt_m();
    let mut g = vec![0.0; params.weights.len()];
    for (r, block) in g.chunks_mut(params.d_aug).enumerate() {
        let c = params.signs[r] * scale * act.first(dot(params.row(r), xc));
        if c != 0.0 {
            for (gi, xi) in block.iter_mut().zip(xc) {
                *gi = c * xi;
            }
        }
    }
    Ok(g)
}
