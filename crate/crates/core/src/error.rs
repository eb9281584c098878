use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("class {0} has no training samples")]
    MissingClass(usize),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("oracle held-out accuracy {accuracy:.4} is below the required {required:.2}")]
    OracleBelowThreshold { accuracy: f64, required: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
