use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: expected {expected}, got {got}")]
    GridMismatch { expected: String, got: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "{solver} did not converge after {iterations} iterations (last change {last_change:e})"
    )]
    Convergence {
        solver: &'static str,
        iterations: usize,
        last_change: f64,
        /// Successive sup-norm changes, oldest first.
        history: Vec<f64>,
    },

    #[error("level n={n}: {source}")]
    AtLevel {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment aborted: {0}")]
    Aborted(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_level(n: usize) -> impl FnOnce(Error) -> Error {
        move |e| Error::AtLevel {
            n,
            source: Box::new(e),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into(),
            source,
        }
    }
}
