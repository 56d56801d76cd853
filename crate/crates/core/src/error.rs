use thiserror::Error;

use crate::optimizer::RunTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The iterate left every sensible region. The trace up to (and including)
    /// the offending iteration is attached for diagnosis.
    #[error("run diverged at iteration {iteration} (norm {norm:e})")]
    Diverged {
        iteration: usize,
        norm: f64,
        trace: Box<RunTrace>,
    },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("task {0} has no sampler")]
    MissingSampler(usize),

    #[error("task {0} is not quadratic")]
    NotQuadratic(usize),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
