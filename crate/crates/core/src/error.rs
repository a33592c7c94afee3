use thiserror::Error;

/// Errors raised by the KARMA library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KarmaError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("series of length {n} is too short (need more than {needed} observations)")]
    SeriesTooShort { n: usize, needed: usize },

    #[error("observation {index} = {value} lies outside the support ({lower}, {upper})")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("autocorrelation undefined for a constant series")]
    ZeroVariance,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, KarmaError>;

impl From<std::io::Error> for KarmaError {
    fn from(e: std::io::Error) -> Self {
        KarmaError::Io(e.to_string())
    }
}
