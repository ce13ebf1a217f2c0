use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed tabular input. `row` and `column` are 1-based; row 1 is the header.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("no samples")]
    NoSamples,

    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is rank deficient (singular values {smallest:e} / {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },

    #[error("target return {target} outside attainable range [{low}, {high}]")]
    Infeasible { target: f64, low: f64, high: f64 },

    #[error("portfolio variance is zero; Sharpe ratio undefined")]
    ZeroVariance,

    #[error("non-finite Hopfield state at step {step} (t = {time})")]
    Integration { step: usize, time: f64 },

    /// Relaxation of an equilibrium-propagation phase ran away.
    #[error("unstable relaxation in {phase} phase at step {step} (|x|inf = {magnitude:e})")]
    Instability {
        phase: String,
        step: usize,
        magnitude: f64,
    },

    #[error("training diverged: loss {loss:e} exceeds 10x initial loss {initial:e}; reduce the step size")]
    StepSize { loss: f64, initial: f64 },

    #[error("steady-state map did not converge by t = {horizon}; eigenvalues of J - I with nonnegative real part: {eigenvalues:?}")]
    SpectralNonConvergence { horizon: f64, eigenvalues: Vec<f64> },

    #[error("eigendecomposition failed: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
