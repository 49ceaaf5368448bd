use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants that stem from an iterative method carry the last iterate so that
/// callers can inspect or resume from it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NewtonFailure {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("continuation stalled at mu = {mu}: step {step:e} fell below the minimum")]
    ContinuationStall { mu: f64, step: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("eigenvalue iteration did not converge: {message}")]
    EigenFailure { message: String, history: Vec<f64> },

    #[error("singularity error: {0}")]
    Singularity(String),

    #[error("matrix is not Hurwitz (largest eigenvalue {largest_eig:e}); no stationary covariance exists")]
    NotHurwitz { largest_eig: f64 },

    #[error("Krylov solver {solver} did not converge in {iterations} iterations (relative residual {residual:e})")]
    KrylovFailure {
        solver: String,
        iterations: usize,
        residual: f64,
        best_iterate: Vec<f64>,
    },

    #[error("time stepping unstable at t = {time}: reduce the step size")]
    StepSize { time: f64 },

    #[error("simulation diverged at t = {time} (|p|_inf = {norm:e})")]
    Divergence { time: f64, norm: f64 },

    #[error("matrix is not positive definite: {0}")]
    Conditioning(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
