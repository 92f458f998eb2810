use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 1, got {0}")]
    BadDimension(usize),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ball B({center:?}, {radius}) leaves the chart domain")]
    BallOutsideChart { center: Vec<f64>, radius: f64 },
    #[error("metric is singular or not positive definite at {0:?}")]
    SingularMetric(Vec<f64>),
    #[error("derivative order {requested} unavailable (need at least {required})")]
    InsufficientOrder { requested: usize, required: usize },
    #[error("admissibility order {given} insufficient, required beta = {required}")]
    AdmissibilityOrder { given: usize, required: usize },
    #[error("form degree {p} exceeds dimension {n}")]
    DegreeTooLarge { p: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("series not convergent at this (eps, t, gamma): rho = {rho}")]
    SeriesDivergent { rho: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("expression parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("scenario error at {path}: {msg}")]
    Scenario { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
