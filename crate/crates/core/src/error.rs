use thiserror::Error;

/// Errors raised by the model, expansion, propagation and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error(
        "current pulse violates {constraint} at step {step}, channel {channel}: value {value}"
    )]
    InfeasiblePulse {
        constraint: &'static str,
        step: usize,
        channel: usize,
        value: f64,
    },

    #[error("quadratic program did not converge after {iterations} iterations (kkt residual {residual:e})")]
    QpNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("linear system is singular or not positive definite")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
