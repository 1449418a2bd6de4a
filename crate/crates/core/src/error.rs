use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the discretization, decomposition, and solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular at pivot {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("matrix is not positive semidefinite: v^T K v = {value:e}")]
    NotPositiveSemidefinite { value: f64 },

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("coefficient value {value} at cell {cell} is not positive")]
    NonPositiveCoefficient { cell: usize, value: f64 },

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("partition of unity normalization failed at node {node}")]
    PartitionOfUnity { node: usize },

    #[error("subdomain {subdomain}: {message}")]
    Subdomain { subdomain: usize, message: String },

    #[error("eigensolver did not converge: {converged} of {requested} pairs, residual {residual:e}")]
    EigenNotConverged {
        requested: usize,
        converged: usize,
        residual: f64,
    },

    #[error("subdomain {subdomain} provides {available} eigenvectors, {required} required")]
    InsufficientEigenvectors {
        subdomain: usize,
        available: usize,
        required: usize,
    },

    #[error("coarse space is empty")]
    EmptyCoarseSpace,

    #[error("reference solution has zero energy")]
    ZeroReference,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
