use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh invariant violated: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point {0:?} lies outside the reference triangle")]
    OutsideReference([f64; 3]),

    #[error("unsupported quadrature degree {0} (supported: 1..=8)")]
    UnsupportedQuadrature(usize),

    #[error("matrix is singular: no usable pivot at index {index}")]
    SingularPivot { index: usize },

    #[error("matrix is not symmetric positive definite (failed at column {column})")]
    NotPositiveDefinite { column: usize },

    #[error("dense problem of size {size} exceeds the cap of {cap}; use a coarser mesh or raise the cap")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("eigensolver did not converge ({0})")]
    NoConvergence(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("time step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown manufactured solution '{0}'")]
    UnknownSolution(String),

    #[error("trajectory is missing diagnostics: {0}")]
    MissingDiagnostics(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(step: usize, err: Error) -> Self {
        Error::AtStep {
            step,
            source: Box::new(err),
        }
    }

    pub(crate) fn at_level(level: usize, err: Error) -> Self {
        Error::AtLevel {
            level,
            source: Box::new(err),
        }
    }
}
