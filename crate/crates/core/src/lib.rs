//! Over-parameterized two-layer networks trained by gradient descent and
//! natural gradient descent, for L² regression and for physics-informed
//! residual losses of heat-type equations.
//!
//! The crate provides the trainers together with the quantities that govern
//! their convergence: finite- and infinite-width Gram matrices, their
//! extreme eigenvalues, Jacobians, second-order remainders of each step and
//! weight drift. The [`theory`] module turns these into measured-versus-bound
//! [`theory::CheckReport`]s.

// NaN-rejecting `!(x > 0.0)` checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gram;
pub mod network;
pub mod numerics;
pub mod pinn;
pub mod regression;
pub mod rng;
pub mod theory;
pub mod trace;

pub use error::{Error, Result};
pub use gram::{GramReport, GramSource};
pub use network::{init_params, ActivationKind, AugmentedPoint, ModelParams};
pub use numerics::{DenseMatrix, SpectrumSummary};
pub use pinn::{PdeInstance, PinnDataset, ResidualPair};
pub use regression::RegressionDataset;
pub use theory::{CheckReport, Verdict};
pub use trace::{Diagnostics, EtaMode, Optimizer, Problem, StopReason, TraceRecord, TrainTrace};
