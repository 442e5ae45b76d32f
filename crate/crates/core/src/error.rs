use thiserror::Error;

/// Errors raised while building models, meshes and coefficient sets or while
/// running the scheme and its diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("only one-dimensional domains are supported (got dimension {0})")]
    UnsupportedDimension(usize),

    #[error("invalid domain: truncation lower bound {lower} must be below upper bound {upper}")]
    InvalidDomain { lower: f64, upper: f64 },

    #[error("malformed interval [{a}, {b})")]
    MalformedInterval { a: f64, b: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("initial law puts mass {escaping:e} outside the truncated domain")]
    InitialMassOutside { escaping: f64 },

    #[error("fixed-point iteration did not reach tolerance {tolerance:e} in {iterations} iterations (last increment {last:e})")]
    FixedPointBudget {
        iterations: usize,
        tolerance: f64,
        last: f64,
    },

    #[error("factorization defect at column {column}: pivot {pivot:e}")]
    SingularFactorization { column: usize, pivot: f64 },

    #[error("negative density {value:e} in cell {cell} exceeds the roundoff clamp")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("stationary iteration did not converge in {steps} steps (last change {last:e})")]
    StationaryNotConverged { steps: usize, last: f64 },

    #[error("flow derivative step {epsilon:e} is not below the hitting time {alpha:e}")]
    StepBeyondBoundary { epsilon: f64, alpha: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
