use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("trace {0:e} too small to normalize (conditioned-away branch)")]
    ZeroTrace(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state has coherence between reactant and product blocks (max |Q_R rho Q_P| = {0:e})")]
    InitialCondition(f64),

    #[error("map is not completely positive (smallest Choi eigenvalue {0:e})")]
    NotCompletelyPositive(f64),

    #[error("impossible record: {0}")]
    ImpossibleRecord(String),

    #[error("step too large: rate*dt = {0} exceeds 0.01")]
    StepTooLarge(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
