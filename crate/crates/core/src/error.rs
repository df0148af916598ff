use thiserror::Error;

/// Errors raised by the bandit engine.
#[derive(Debug, Error)]
pub enum BanditError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("value iteration did not converge after {iterations} sweeps (sup delta {sup_delta:e})")]
    NotConverged { iterations: usize, sup_delta: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BanditError>;

pub(crate) fn invalid(msg: impl Into<String>) -> BanditError {
    BanditError::InvalidArgument(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> BanditError {
    BanditError::Numeric(msg.into())
}
