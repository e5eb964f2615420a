use std::io;

use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not reach tolerance {requested:e} (error estimate {achieved:e})")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("probability {value} lies outside [0, 1] by more than the tolerance")]
    OutOfRange { value: f64 },

    #[error("column {column} has zero total probability and cannot be postselected")]
    ZeroColumn { column: usize },

    #[error("matrix is not column-stochastic (column {column} sums to {sum}); normalize first")]
    NotStochastic { column: usize, sum: f64 },

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<png::EncodingError> for Error {
    fn from(e: png::EncodingError) -> Self {
        match e {
            png::EncodingError::IoError(e) => Error::Io(e),
            other => Error::Parse(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
