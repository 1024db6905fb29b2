use thiserror::Error;

/// Errors raised by the model, density and estimator layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value passed to accumulator: {0}")]
    NonFinite(f64),

    #[error("at least {needed} samples required, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("oracle refuses instance: {0}")]
    OracleGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
