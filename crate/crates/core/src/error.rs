use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported transition: {0}")]
    UnsupportedTransition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stable state: {0} has no decay channel")]
    StableState(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("calibration data must contain both dark and bright samples")]
    MissingClass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no ion located in calibration frames")]
    NoIonLocated,

    #[error("fit failed after {iterations} iterations (residual norm {residual:.6e}): {reason}")]
    FitFailure {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
