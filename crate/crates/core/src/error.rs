use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dims, unknown env id, inconsistent hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// API misuse: dim mismatch at call time, sampling from an empty buffer, etc.
    #[error("usage error: {0}")]
    Usage(String),
    /// Non-finite values encountered; the run must abort.
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
