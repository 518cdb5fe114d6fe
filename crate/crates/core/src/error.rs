use thiserror::Error;

/// Errors raised by the orbit library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("phase is undefined at the origin")]
    ZeroPosition,
    #[error("potential is singular at the origin for epsilon = {epsilon}")]
    Singularity { epsilon: f64 },
    #[error("|x| = {modulus:e} is below the origin floor {floor:e}")]
    OriginProximity { modulus: f64, floor: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("turning-point series remainder {remainder:e} exceeds {limit:e} (dt0 = {dt0:e})")]
    SeriesAccuracy { dt0: f64, remainder: f64, limit: f64 },
    #[error("coefficient vector violates parity for n = {n}: {coefficients:?}")]
    Parity { n: usize, coefficients: Vec<u32> },
    #[error("no coefficient vector with sum {k} and the required parity exists for n = {n}, j_max = {j_max}")]
    InfeasibleCoefficients { k: u32, n: usize, j_max: usize },
    #[error("trajectory is not closed")]
    NotClosed,
    #[error("trajectory never crosses the negative imaginary axis")]
    NoNegativeAxisCrossing,
    #[error("critical fit failed after {iterations} iterations: {reason}")]
    FitFailure { iterations: usize, reason: String },
    #[error("integration failed: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, OrbitError>;
