//! Bounded manifold completion.
//!
//! Recovers a low-rank squared-distance matrix that lies elementwise between
//! given lower and upper bounds and whose Gramian is positive semi-definite,
//! by minimizing a truncated nuclear norm with an ADMM solver. The recovered
//! matrix yields a spectral embedding of the point cloud.

pub mod bounds;
pub mod cli;
pub mod datasets;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod shrinkage;
pub mod solver;

pub use error::{BmcError, Result};
