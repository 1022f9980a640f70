//! Physics-informed two-layer networks for `∂_t u − Δu = f` with
//! Dirichlet/initial data.

mod dataset;
mod gram_mc;
mod instance;
mod residual;
mod train;

pub use dataset::{initial_slice_count, sample_dataset, PinnDataset};
pub use gram_mc::{gram_inf_mc, DEFAULT_N_MC, JACKKNIFE_GROUPS, MIN_N_MC};
pub use instance::{make_instance, InstanceKind, PdeInstance};
pub use residual::{gram_pinn, jacobian, pinn_loss, residuals, residuals_and_jacobian, ResidualPair};
pub use train::{gd_step_pinn, ngd_step, train, NgdStepInfo, TrainSettings, NGD_DEFAULT_ETA, NUMERICAL_FLOOR};

#[cfg(test)]
mod tests;
