use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a stated precondition or hypothesis.
    #[error("validation error: {0}")]
    Validation(String),

    /// A periodic pinning construction found no cell inside the domain.
    #[error("no pinning cell fits inside the domain (delta = {delta})")]
    NoInteriorCell { delta: f64 },

    /// The requested discretisation cannot represent the problem.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{stage} did not converge after {iterations} iterations (residual {residual:.3e}, energy {energy:.6e})")]
    NonConvergence {
        stage: String,
        iterations: usize,
        residual: f64,
        energy: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::NoInteriorCell { .. } | Error::Resolution(_) => 2,
            Error::NonConvergence { .. } => 3,
            Error::Io { .. } | Error::Format(_) => 4,
        }
    }
}
