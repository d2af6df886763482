use thiserror::Error;

/// Failure reported by the sparse linear solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not positive definite (factorization hit a non-positive pivot)")]
    NotPositiveDefinite,
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.1e} after refinement")]
    Inaccurate { residual: f64, tolerance: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("factorization backend failure: {0}")]
    Backend(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("fracture iteration did not converge at step {step}: {iterations} iterations, {last_breaks} bonds broken in the last pass")]
    NonConvergence {
        step: usize,
        iterations: usize,
        last_breaks: usize,
    },
    #[error("solver failure at step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerical solve (singular operators, stalled
    /// iterations, fracture loop cap) as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Solver(_) | Error::NonConvergence { .. } => true,
            Error::StepFailure { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
