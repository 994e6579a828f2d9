use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum RwreError {
    #[error("invalid environment law: {0}")]
    InvalidSpec(String),

    #[error("environment law is not elliptic (minimal transition probability is {min})")]
    NonElliptic { min: f64 },

    #[error("{op} does not accept {kind} environment laws")]
    WrongSpecKind {
        op: &'static str,
        kind: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{what}: need at least {needed} samples, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RwreError>;
