use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("times must be strictly increasing (index {index})")]
    NonIncreasingTimes { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter {name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("{what} is not positive definite (pivot {pivot}) even after jitter")]
    NotPositiveDefinite { what: &'static str, pivot: usize },

    #[error("eigenvalue {value:e} below clamp tolerance in {what}")]
    NegativeEigenvalue { what: &'static str, value: f64 },

    #[error("eigendecomposition failed to converge for {0}")]
    EigenFailure(&'static str),

    #[error("design matrix is identically zero")]
    ZeroDesign,

    #[error("no admissible cell in the penalty grid")]
    NoAdmissibleCell,

    #[error("all {0} chains failed")]
    AllChainsFailed(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
