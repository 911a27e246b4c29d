use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid class count {0}: at least 2 classes are required")]
    InvalidClassCount(usize),

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("matrix is not square: {rows} rows, {cols} columns")]
    NotSquare { rows: usize, cols: usize },

    #[error("not column-stochastic: {0}")]
    NotStochastic(crate::stochastic::Violation),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },

    #[error("logit vector has a non-finite entry at position {0}")]
    NonFiniteLogit(usize),

    #[error("empty search domain [{lo}, {hi}]")]
    EmptyDomain { lo: f64, hi: f64 },

    #[error("objective is +inf at every sample of [{lo}, {hi}]")]
    NoFiniteValue { lo: f64, hi: f64 },

    #[error("invalid scan configuration: {0}")]
    InvalidScanConfig(String),

    #[error("malformed grid: {0}")]
    MalformedGrid(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("{assumption} evaluation requires {missing}")]
    AssumptionMismatch {
        assumption: &'static str,
        missing: &'static str,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
