//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any part of the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid label set, schedule, or other configuration input.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed corpus or report data.
    #[error("data error: {0}")]
    Data(String),

    /// A loss, gradient, or parameter became non-finite.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Shape or index mismatch between model components.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
