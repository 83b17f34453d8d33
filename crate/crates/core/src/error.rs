use std::io;

use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index {index:?} out of bounds for extents {extents:?}")]
    OutOfBounds { index: Vec<usize>, extents: Vec<usize> },

    #[error("non-finite value at flat position {0}")]
    NonFinite(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate operator: {0}")]
    Degenerate(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("explicit matrix of {rows}x{cols} exceeds the {limit}-entry cap")]
    TooLarge { rows: usize, cols: usize, limit: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("value {value} at flat position {index} is outside [0, {max}]")]
    OutOfRange { value: f64, index: usize, max: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
