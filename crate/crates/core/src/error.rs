use thiserror::Error;

/// Errors raised by the annealing engine and its satellites.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdaError {
    #[error("coordinate {index} = {value} lies outside the divergence domain")]
    Domain { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("prototype snapshots misaligned: {current} current vs {previous} previous")]
    Alignment { current: usize, previous: usize },

    #[error("capacity exceeded: {requested} prototypes requested, limit is {limit}")]
    CapacityExceeded { requested: usize, limit: usize },

    #[error("insufficient samples for prototype {prototype}: need {needed}, have {have}")]
    InsufficientSamples {
        prototype: usize,
        needed: usize,
        have: usize,
    },

    #[error("observation stream exhausted before {0}")]
    StreamExhausted(&'static str),

    #[error("model is not trained for classification: {0}")]
    UntrainedModel(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, OdaError>;
