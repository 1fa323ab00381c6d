use thiserror::Error;

/// Errors produced by model construction, estimation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular innovation matrix ({0}); R must be positive definite")]
    SingularInnovation(String),

    #[error("nonfinite value encountered: {0}")]
    NonFinite(String),

    #[error("time index {requested} is beyond the model horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("missing neighbor estimate for subsystem {subsystem} (neighbor {neighbor})")]
    MissingNeighbor { subsystem: usize, neighbor: usize },

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error("all {0} trials diverged; no ensemble statistics available")]
    AllTrialsDiverged(usize),

    #[error("divergence detected: {0}")]
    Diverged(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
