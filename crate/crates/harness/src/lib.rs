//! Experiment orchestration for `manifold-pde`: N-sweeps with repeated
//! trials, error metrics, slope fits and CSV emission.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use config::{ExperimentConfig, FdKernel, ManifoldSpec, Method};
pub use experiment::{error_vs_modes, run_convergence, ConvergenceReport};
