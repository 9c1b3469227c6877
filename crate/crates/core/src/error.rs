use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("coordinate ({x}, {y}) outside {width}x{height} map")]
    OutOfBounds {
        x: isize,
        y: isize,
        width: usize,
        height: usize,
    },
    #[error("pyramid shape mismatch: {0}")]
    PyramidShape(String),
    #[error("frame memory shape mismatch: {0}")]
    MemoryShape(String),
    #[error("frame memory is empty")]
    EmptyMemory,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("value {value} at flat index {index} outside [0, 1]")]
    Range { index: usize, value: f64 },
    #[error("class mismatch: {0}")]
    Class(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("feature error: {0}")]
    Feature(String),
    #[error("degenerate feature: EMA update produced a zero vector")]
    DegenerateFeature,
    #[error("inconsistent assignment: {0}")]
    Consistency(String),
    #[error("frames out of order: {previous} followed by {next}")]
    Ordering { previous: u32, next: u32 },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid row: {0}")]
    InvalidRow(String),
    #[error("scenario spec error: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
