//! Mesh-free elliptic PDE solvers on point clouds sampled from closed
//! manifolds.

extern crate blas_src;

pub mod error;
pub mod geometry;
pub mod kernel;
pub mod operators;
pub mod linalg;
pub mod rbf;
pub mod scalar;
pub mod solvers;
pub mod sparse;
pub mod spectra;
pub mod tangent;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of the dense operator pipeline.
pub type Real = f64;
pub type Kernel = kernel::KernelSpec<Real>;
