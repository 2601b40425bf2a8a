use thiserror::Error;

/// Errors produced by the numerical kernels, trainers and data pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix data length {len} does not match shape {rows}x{cols}")]
    BadShape {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error("factorization failed: matrix is not positive definite at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cached inverse is stale: built for eta={cached}, n_tilde={cached_nodes}; needed eta={wanted}, n_tilde={wanted_nodes}")]
    StaleCache {
        cached: f64,
        cached_nodes: usize,
        wanted: f64,
        wanted_nodes: usize,
    },

    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("target column {column} is constant; relative error undefined")]
    ConstantTarget { column: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unsupported ARFF feature: {feature}")]
    Unsupported { line: usize, feature: String },

    #[error("line {line}: missing value")]
    MissingValue { line: usize },

    #[error("row {row}, column {col}: {message}")]
    Cell {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
