use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical kernels, optimizers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left:?}, right is {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("{op} requires a symmetric matrix (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { op: &'static str, asymmetry: f64 },

    #[error("matrix is rank deficient at column {column} (|r_kk| = {pivot:.3e})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("matrix is numerically singular (smallest eigenvalue {smallest:.3e}, largest {largest:.3e})")]
    Singular { smallest: f64, largest: f64 },

    #[error("{op} did not converge after {iterations} iterations")]
    NoConvergence { op: &'static str, iterations: usize },

    #[error("invalid matrix data: {0}")]
    InvalidData(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("iterate left the safe region: distance {distance:.6e} > epsilon {epsilon}")]
    OutsideSafeRegion { distance: f64, epsilon: f64 },

    #[error("sample index {index} out of range for {count} samples")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("objective evaluation failed at iteration {iter}: {source}")]
    Objective {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("data container error: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iter(self, iter: usize) -> Self {
        match self {
            e @ Error::Objective { .. } => e,
            e => Error::Objective {
                iter,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
