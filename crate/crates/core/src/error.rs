use thiserror::Error;

use crate::trace::TrainTrace;

/// Errors produced by the numerical kernels, trainers and checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("activation {activation} does not provide derivative order {order}")]
    UnsupportedDerivative { activation: &'static str, order: u8 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("singular system: factorization failed even with ridge {ridge:e}")]
    Singular { ridge: f64 },

    #[error("rank-deficient Gram matrix J J^T (lambda_min = {lambda_min:e})")]
    RankDeficient { lambda_min: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iter} (loss {loss:e})")]
    Diverged {
        iter: usize,
        loss: f64,
        trace: Box<TrainTrace>,
    },

    #[error("unknown instance `{0}` (known: poly-sine, zero)")]
    UnknownInstance(String),

    #[error("degenerate dataset after {attempts} sampling attempts: {reason}")]
    DegenerateDataset { attempts: usize, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
