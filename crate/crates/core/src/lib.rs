//! Multiscale spectral generalized finite elements on Cartesian meshes.
//!
//! The crate discretizes `-div(A grad u) = f` with Q1 elements, builds local
//! spectral approximation spaces on oversampled subdomains (either on the whole
//! oversampling domain or only on a ring around the subdomain boundary, followed
//! by a harmonic extension inward), glues them with a partition of unity into a
//! global coarse space, and uses that space either as a direct multiscale
//! approximation or as the coarse level of a two-level restricted additive
//! Schwarz preconditioner.

pub mod coefficients;
pub mod config;
pub mod decomposition;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod factor;
pub mod fem;
pub mod gfem;
pub mod local_spaces;
pub mod mesh;
pub mod oracle;
pub mod precond;
pub mod sparse;

pub use error::{Error, Result};
