use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("point {second} duplicates point {first}")]
    DuplicatePoint { first: usize, second: usize },

    #[error("point cloud file {0} holds no points")]
    EmptyCloud(PathBuf),

    #[error("neighborhood of point {index} is degenerate (rank {rank} < {dim})")]
    DegenerateNeighborhood { index: usize, rank: usize, dim: usize },

    #[error("kernel family {0} cannot build global gradient matrices")]
    NonDifferentiableKernel(&'static str),

    #[error("local system at point {index} is singular")]
    SingularStencil { index: usize },

    #[error("only {available} eigenvalues survive filtering, {requested} requested")]
    InsufficientSpectrum { available: usize, requested: usize },

    #[error("eigenvalue with imaginary part {0:e} is not negligible")]
    ComplexSpectrum(f64),

    #[error("singular linear system (reciprocal condition estimate {rcond:e})")]
    SingularSystem { rcond: f64 },

    #[error("iterative solver failed: {0}")]
    SolverBreakdown(String),

    #[error("VBDM density is non-positive at point {0}")]
    NonPositiveDensity(usize),

    #[error("dense operator with N = {n} exceeds the capacity limit {limit}")]
    Capacity { n: usize, limit: usize },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed binary file: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
