use thiserror::Error;

/// Errors produced by the reactive point process engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RppError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid horizon [{start}, {end})")]
    InvalidHorizon { start: f64, end: f64 },

    #[error("runaway intensity {intensity} exceeded ceiling {ceiling} at t = {time}")]
    Runaway {
        time: f64,
        intensity: f64,
        ceiling: f64,
    },

    #[error("quadrature tolerance not reached on [{start}, {end}]")]
    ToleranceNotReached { start: f64, end: f64 },

    #[error("no trails to estimate from")]
    NoTrails,

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("nonlinear fit did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("corpora do not match: {0}")]
    MismatchedCorpora(String),

    #[error("histogram binnings differ")]
    BinningMismatch,

    #[error("corpus has no inter-event gaps")]
    NoGaps,

    #[error("low-statistic region is empty even at quantile {quantile}")]
    EmptyLowRegion { quantile: f64 },

    #[error("design matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("optimizer failed: {0}")]
    OptimizerFailure(String),

    #[error("grid of policy reports is empty")]
    EmptyGrid,

    #[error("no events qualify for the ranking comparison")]
    NoQualifyingEvents,

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("{path}: {reason}")]
    Io { path: String, reason: String },

    #[error("{file}: expected header `{expected}`, found `{found}`")]
    HeaderMismatch {
        file: String,
        expected: String,
        found: String,
    },

    #[error("referential integrity: {0}")]
    ReferentialIntegrity(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
}

pub type Result<T, E = RppError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> RppError {
    RppError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
