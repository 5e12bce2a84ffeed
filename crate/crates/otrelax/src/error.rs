//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by builders, solvers and model generators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid cluster specification: {0}")]
    InvalidClusterSpec(String),

    #[error("invalid conic program: {0}")]
    InvalidProgram(String),

    #[error("cost is not decomposable over the cluster specification: {0}")]
    CostNotDecomposable(String),

    #[error("basis degree too low for the cost: {0}")]
    DegreeTooLow(String),

    #[error("missing required moment {0}")]
    MissingMoment(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver failed to converge within the iteration cap")]
    EigenNoConvergence,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solution is not usable: {0}")]
    BadSolution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
