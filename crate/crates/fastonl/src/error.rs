//! Error types shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("node id {id} out of range (n = {n})")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("{0}")]
    Numeric(String),
    #[error(
        "power iteration did not converge after {iterations} iterations (last estimate {last})"
    )]
    NoConvergence { iterations: usize, last: f64 },
    #[error("dense oracle disabled for n = {n} (cap = {cap})")]
    OracleCap { n: usize, cap: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attach the offending path to an I/O error.
    pub fn io_at(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(
            err.kind(),
            format!("{}: {err}", path.as_ref().display()),
        ))
    }
}
