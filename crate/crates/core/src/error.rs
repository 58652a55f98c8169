use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible inversion: radicand {radicand:.6e} is negative (ambient dominates the sensor reading)")]
    InfeasibleInversion { radicand: f64 },

    #[error("unstable time step: dt = {dt:.6e} s exceeds the explicit bound {limit:.6e} s")]
    Stability { dt: f64, limit: f64 },

    #[error("fit failed: {message} (residual {residual:.6e})")]
    Fit { message: String, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
