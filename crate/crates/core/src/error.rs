use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("joint table entries sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("marginal {axis} index {index} is zero")]
    ZeroMarginal { axis: &'static str, index: usize },

    #[error("sensitive group {0} is empty")]
    EmptyGroup(usize),

    #[error("row {row} of the probability matrix is off the simplex (sum {sum})")]
    OffSimplex { row: usize, sum: f64 },

    #[error(
        "SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:e}, \
         largest/smallest column norm {largest:e}/{smallest:e})"
    )]
    SvdNotConverged {
        sweeps: usize,
        residual: f64,
        largest: f64,
        smallest: f64,
    },

    #[error("training diverged at iteration {iter}: non-finite objective")]
    Diverged {
        iter: usize,
        trace: Box<crate::fairtrain::TrainTrace>,
    },

    #[error("cluster bookkeeping inconsistent: {0}")]
    Inconsistent(String),

    #[error("dataset spec: {0}")]
    Spec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
