use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised anywhere in the library.
///
/// Variants group into the three exit classes used by the CLI: bad input
/// (argument domain, experiment gates, configuration), numerical failure, and
/// I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("gate violated: {0}")]
    Gate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("covariance matrix is not positive definite (n = {n}, after jitter {jitter:e})")]
    NotPositiveDefinite { n: usize, jitter: f64 },

    #[error(
        "circulant embedding failed: minimum eigenvalue {min_eigenvalue:e} below -{tolerance:e}"
    )]
    Embedding { min_eigenvalue: f64, tolerance: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}, requested {requested:e}")]
    Quadrature {
        estimate: f64,
        error: f64,
        requested: f64,
    },

    #[error("non-finite value {value} at grid node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("degenerate path: zero radius at grid node {node}")]
    DegeneratePath { node: usize },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for this failure: 2 for input/gate errors,
    /// 3 for numerical failures, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Gate(_)
            | Error::Config(_)
            | Error::Degenerate(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::NotPositiveDefinite { .. }
            | Error::Embedding { .. }
            | Error::Quadrature { .. }
            | Error::NonFinite { .. }
            | Error::DegeneratePath { .. }
            | Error::Inconsistent(_) => 3,
        }
    }
}
