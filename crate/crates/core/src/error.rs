use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("derivative order {0} is not supported (expected 0..=3)")]
    UnsupportedDerivativeOrder(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("angular step too coarse for meaningful asymptotics: delta_alpha = {delta_alpha} > pi/4")]
    CoarseAngularStep { delta_alpha: f64 },

    #[error("quadrature did not converge: relative change {relative_change:e} at {context}")]
    QuadratureNotConverged { relative_change: f64, context: String },

    #[error("patch epsilon {patch} does not match grid epsilon {grid}")]
    EpsilonMismatch { patch: f64, grid: f64 },

    #[error("negative variance {value} at (alpha = {alpha}, p = {p})")]
    NegativeVariance { alpha: f64, p: f64, value: f64 },

    #[error("zero denominator: the variance vanishes along the whole trajectory")]
    ZeroDenominator,

    #[error("theta must be a nonzero vector")]
    ZeroTheta,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
