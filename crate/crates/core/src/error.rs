use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A time or horizon does not land on the sample grid.
    #[error("{value} s is not on the sample grid (step {step} s)")]
    OffGrid { value: f64, step: f64 },

    #[error("{what} = {value} is out of range: {reason}")]
    Range {
        what: &'static str,
        value: f64,
        reason: String,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("need at least {needed} samples, got {got} ({what})")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("δ·mc_samples = {product} < 10; density quantile unreliable")]
    Resolution { product: f64 },

    #[error("model does not support this query: {0}")]
    Unsupported(String),

    #[error("no region cached for δ = {0}")]
    UncachedDelta(f64),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn range(what: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::Range {
            what,
            value,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Degenerate(_)
            | Error::NotSpd(_)
            | Error::Resolution { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}
