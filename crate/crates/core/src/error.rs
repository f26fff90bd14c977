//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by constellation, metric, optimizer and simulator operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or configuration dimensions are inconsistent.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A collection is too small (or empty) for the requested operation.
    #[error("size error: {0}")]
    Size(String),

    /// A scalar argument is outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix failed a structural requirement (e.g. not positive definite).
    #[error("linear algebra error: {0}")]
    LinAlg(String),

    /// A value violated a documented invariant (unit norms, Grassmannian scaling, ...).
    #[error("invariant error: {0}")]
    Invariant(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A line-search or retraction step degenerated.
    #[error("step error: {0}")]
    Step(String),

    /// File or serialization failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
