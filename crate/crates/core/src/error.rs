use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel not twice differentiable here (coincident points for Matern 3/2)")]
    KernelNotTwiceDifferentiable,

    #[error("ill-conditioned kernel matrix: factorization failed with jitter up to {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error(
        "degenerate posterior: moment matrix min eigenvalue {min_eigenvalue:e} below \
         {threshold:e}; perturb duplicate batch points"
    )]
    DegeneratePosterior { min_eigenvalue: f64, threshold: f64 },

    #[error("derivative system is singular ({0}); fall back to a finite-difference Hessian")]
    SingularDerivativeSystem(String),

    #[error("solution has not converged (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("all {restarts} restarts failed; last error: {last}")]
    AllRestartsFailed { restarts: usize, last: String },

    #[error("unknown benchmark function `{0}`")]
    UnknownBenchmark(String),
}
