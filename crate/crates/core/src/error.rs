use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label distribution: {0}")]
    InvalidDistribution(String),

    #[error("zero annotations")]
    ZeroAnnotations,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate uid `{0}`")]
    DuplicateUid(String),

    #[error("no prediction for uid `{0}`")]
    MissingPrediction(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "smoothing mass {alpha} would push the top entry {top} below zero (need top - alpha + alpha/3 >= 0)"
    )]
    SmoothingOutOfRange { alpha: f64, top: f64 },

    #[error(
        "budget mismatch: n_single + n_multi * k_way = {n_single} + {n_multi} * {k_way} = {spent} != budget {budget}"
    )]
    BudgetMismatch {
        budget: u64,
        n_single: u64,
        n_multi: u64,
        k_way: u64,
        spent: u64,
    },

    #[error("insufficient pool: need {needed} {what}, have {available}")]
    InsufficientPool {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
