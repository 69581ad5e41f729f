//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("data length {got} does not match {rows}x{cols} = {expected}")]
    DataLength {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },

    #[error("{op}: shape mismatch between {left_rows}x{left_cols} and {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error(
        "matrix is not symmetric: max |a[i][j] - a[j][i]| = {max_asymmetry:e} exceeds {tol:e}"
    )]
    NotSymmetric { max_asymmetry: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward cache does not match parameters: {0}")]
    CacheMismatch(String),

    #[error("scorer {scorer} requires head parameters but none were supplied")]
    MissingHead { scorer: String },

    #[error("scorer {scorer} received incompatible head parameters ({head})")]
    WrongHead { scorer: String, head: String },

    #[error("document {0} not found in index")]
    DocNotFound(u64),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("line {line}: {msg}")]
    MalformedRecord { line: usize, msg: String },

    #[error("queries missing from qrels: {0:?}")]
    MissingQrels(Vec<u64>),

    #[error("loss became non-finite at step {step} (value {value})")]
    NonFiniteLoss { step: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
