use rand::Rng;
use serde::{Deserialize, Serialize};

use super::instance::{make_instance, PdeInstance};
use crate::error::{validation, Error, Result};
use crate::network::{are_parallel, AugmentedPoint};
use crate::rng::{derive_seed, stream, streams};

const MAX_SAMPLING_ATTEMPTS: usize = 100;

/// Interior collocation points with source values and boundary points with
/// boundary data. Points are laid out as `(x₀, x₁ … x_d, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct PinnDataset {
    instance: String,
    d: usize,
    seed: Option<u64>,
    interior: Vec<AugmentedPoint>,
    boundary: Vec<AugmentedPoint>,
    f_values: Vec<f64>,
    g_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    instance: String,
    d: usize,
    seed: Option<u64>,
    interior: Vec<AugmentedPoint>,
    boundary: Vec<AugmentedPoint>,
    f_values: Vec<f64>,
    g_values: Vec<f64>,
}

impl TryFrom<RawDataset> for PinnDataset {
    type Error = Error;

    fn try_from(r: RawDataset) -> Result<Self> {
        let mut ds = Self::new(&r.instance, r.d, r.interior, r.boundary, r.f_values, r.g_values)?;
        ds.seed = r.seed;
        Ok(ds)
    }
}

impl From<PinnDataset> for RawDataset {
    fn from(p: PinnDataset) -> Self {
        Self {
            instance: p.instance,
            d: p.d,
            seed: p.seed,
            interior: p.interior,
            boundary: p.boundary,
            f_values: p.f_values,
            g_values: p.g_values,
        }
    }
}

impl PinnDataset {
    /// Validates dimensions, value lengths and that no two points of the
    /// union are parallel.
    pub fn new(
        instance: &str,
        d: usize,
        interior: Vec<AugmentedPoint>,
        boundary: Vec<AugmentedPoint>,
        f_values: Vec<f64>,
        g_values: Vec<f64>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(validation("spatial dimension d must be at least 1"));
        }
        if interior.is_empty() && boundary.is_empty() {
            return Err(validation("PINN dataset has no points"));
        }
        if f_values.len() != interior.len() || g_values.len() != boundary.len() {
            return Err(validation("value vectors do not match point counts"));
        }
        if f_values.iter().chain(&g_values).any(|v| !v.is_finite()) {
            return Err(validation("source/boundary values must be finite"));
        }
        let all: Vec<&AugmentedPoint> = interior.iter().chain(&boundary).collect();
        if let Some(p) = all.iter().find(|p| p.dim() != d + 2) {
            return Err(validation(format!(
                "point dimension {} does not match d + 2 = {}",
                p.dim(),
                d + 2
            )));
        }
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                if are_parallel(all[i].coords(), all[j].coords()) {
                    return Err(validation(format!("samples {i} and {j} are parallel")));
                }
            }
        }
        Ok(Self {
            instance: instance.to_string(),
            d,
            seed: None,
            interior,
            boundary,
            f_values,
            g_values,
        })
    }

    pub fn instance_name(&self) -> &str {
        &self.instance
    }

    pub fn instance(&self) -> Result<PdeInstance> {
        make_instance(&self.instance, self.d)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_aug(&self) -> usize {
        self.d + 2
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// `n₁ + n₂`.
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interior(&self) -> &[AugmentedPoint] {
        &self.interior
    }

    pub fn boundary(&self) -> &[AugmentedPoint] {
        &self.boundary
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f_values
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g_values
    }

    /// Copy with every interior point (and its source value) listed twice.
    ///
    /// The copy deliberately breaks the no-parallel-samples invariant; it
    /// exists to study how the `1/√n₁` normalization responds to `n₁`.
    pub fn with_duplicated_interior(&self) -> Self {
        let mut out = self.clone();
        out.interior = self.interior.iter().flat_map(|p| [p.clone(), p.clone()]).collect();
        out.f_values = self.f_values.iter().flat_map(|&f| [f, f]).collect();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }
}

fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Number of boundary points placed on the initial slice: proportional to
/// its measure, rounding half up (ties go to the initial slice).
pub fn initial_slice_count(instance: &PdeInstance, n2: usize) -> usize {
    let mi = instance.initial_measure();
    let ml = instance.lateral_measure();
    let share = n2 as f64 * mi / (mi + ml);
    ((share + 0.5).floor() as usize).min(n2)
}

/// Uniform collocation: `n1` interior points in the open space-time box and
/// `n2` boundary points split between the initial slice and the lateral
/// boundary in proportion to their measures.
pub fn sample_dataset(instance: &PdeInstance, n1: usize, n2: usize, seed: u64) -> Result<PinnDataset> {
    if n1 == 0 || n2 == 0 {
        return Err(validation("sample_dataset needs n1 >= 1 and n2 >= 1"));
    }
    let d = instance.d;
    let (t_max, side) = (instance.horizon, instance.side);
    let n_init = initial_slice_count(instance, n2);
    let mut last_err = String::new();

    for attempt in 0..MAX_SAMPLING_ATTEMPTS {
        let mut rng = stream(derive_seed(seed, attempt as u64), streams::DATASET);
        let mut interior = Vec::with_capacity(n1);
        let mut f_values = Vec::with_capacity(n1);
        for _ in 0..n1 {
            let x0 = t_max * open_unit(&mut rng);
            let x: Vec<f64> = (0..d).map(|_| side * open_unit(&mut rng)).collect();
            f_values.push(instance.source(x0, &x));
            interior.push(space_time_point(x0, &x)?);
        }
        let mut boundary = Vec::with_capacity(n2);
        let mut g_values = Vec::with_capacity(n2);
        for j in 0..n2 {
            let (x0, x) = if j < n_init {
                (0.0, (0..d).map(|_| side * rng.random::<f64>()).collect::<Vec<_>>())
            } else {
                let face = rng.random_range(0..2 * d);
                let mut x: Vec<f64> = (0..d).map(|_| side * rng.random::<f64>()).collect();
                x[face / 2] = if face % 2 == 0 { 0.0 } else { side };
                (t_max * rng.random::<f64>(), x)
            };
            g_values.push(instance.boundary(x0, &x));
            boundary.push(space_time_point(x0, &x)?);
        }
        match PinnDataset::new(instance.name(), d, interior, boundary, f_values, g_values) {
            Ok(mut ds) => {
                ds.seed = Some(seed);
                return Ok(ds);
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::DegenerateDataset {
        attempts: MAX_SAMPLING_ATTEMPTS,
        reason: last_err,
    })
}

fn space_time_point(x0: f64, x: &[f64]) -> Result<AugmentedPoint> {
    let mut c = Vec::with_capacity(x.len() + 2);
    c.push(x0);
    c.extend_from_slice(x);
    c.push(1.0);
    AugmentedPoint::new(c)
}
