use thiserror::Error;

/// Errors surfaced by the library. Input validation failures are
/// distinguished from numerical aborts so callers can map them to
/// different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("operation '{op}' does not support kernel kind '{kind}'")]
    UnsupportedKernel { op: &'static str, kind: String },

    #[error("{what}: requested {requested} exceeds cap {cap}")]
    ResourceLimit {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("numerical failure at step {step}: {detail}")]
    Numerical { step: u64, detail: String },

    #[error("parse error in field '{field}': {detail}")]
    Parse { field: String, detail: String },

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
