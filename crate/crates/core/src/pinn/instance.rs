use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    /// `u*(x₀, x) = x₀ + sin(x₁ + … + x_d)`, so `f = 1 + d·sin(Σx_i)`.
    PolySine,
    /// `u* ≡ 0`, `f ≡ 0`, `g ≡ 0`.
    Zero,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PolySine => "poly-sine",
            Self::Zero => "zero",
        }
    }
}

/// A heat-type problem `∂_t u − Δu = f` on `(0, T) × Ω` with Dirichlet and
/// initial data `g`, built from a manufactured solution.
///
/// The domain is `Ω = [0, 1/√(d+1)]^d` with `T = 1/√(d+1)`, so every
/// space-time point has Euclidean norm at most 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeInstance {
    pub kind: InstanceKind,
    pub d: usize,
    pub horizon: f64,
    pub side: f64,
}

/// Looks up a built-in instance by name.
pub fn make_instance(name: &str, d: usize) -> Result<PdeInstance> {
    let kind = match name {
        "poly-sine" => InstanceKind::PolySine,
        "zero" => InstanceKind::Zero,
        other => return Err(Error::UnknownInstance(other.to_string())),
    };
    if d == 0 {
        return Err(validation("spatial dimension d must be at least 1"));
    }
    let scale = 1.0 / ((d + 1) as f64).sqrt();
    Ok(PdeInstance {
        kind,
        d,
        horizon: scale,
        side: scale,
    })
}

impl PdeInstance {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// `u*(x₀, x)`.
    pub fn solution(&self, x0: f64, x: &[f64]) -> f64 {
        match self.kind {
            InstanceKind::PolySine => x0 + x.iter().sum::<f64>().sin(),
            InstanceKind::Zero => 0.0,
        }
    }

    /// `f = ∂_t u* − Δu*`.
    pub fn source(&self, _x0: f64, x: &[f64]) -> f64 {
        match self.kind {
            InstanceKind::PolySine => 1.0 + self.d as f64 * x.iter().sum::<f64>().sin(),
            InstanceKind::Zero => 0.0,
        }
    }

    /// `g = u*` restricted to the initial slice and lateral boundary.
    pub fn boundary(&self, x0: f64, x: &[f64]) -> f64 {
        self.solution(x0, x)
    }

    /// `(d)`-dimensional measure of the initial slice `{0} × Ω`.
    pub fn initial_measure(&self) -> f64 {
        self.side.powi(self.d as i32)
    }

    /// `(d)`-dimensional measure of the lateral boundary `[0, T] × ∂Ω`.
    pub fn lateral_measure(&self) -> f64 {
        self.horizon * 2.0 * self.d as f64 * self.side.powi(self.d as i32 - 1)
    }
}
