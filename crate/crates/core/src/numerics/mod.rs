//! Dense linear algebra and finite-difference oracles.

mod diff;
mod eig;
mod lq;
mod matrix;
mod solve;

pub use diff::{
    central_diff, central_second_diff, finite_diff_grad, DEFAULT_SECOND_STEP, DEFAULT_STEP,
};
pub use eig::{spectral_norm, sym_eig_extremes, sym_eigenvalues, SpectrumSummary, JACOBI_TOL, SYMMETRY_TOL};
pub use lq::{min_norm_solve, MinNormSolution, LQ_RANK_TOL};
pub use matrix::{dot, norm2, DenseMatrix};
pub use solve::{solve_spd, SpdSolution, FALLBACK_RIDGE_FACTOR};
