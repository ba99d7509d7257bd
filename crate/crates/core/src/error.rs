use thiserror::Error;

/// Errors raised by the certification toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A malformed configuration (bad simplex, zero replications, shape mismatch, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but violates a data invariant.
    #[error("invalid record {record}: {message}")]
    InvalidRecord { record: String, message: String },

    /// The root finder could not bracket or converge.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A classifier oracle failed while producing a sample.
    #[error("oracle failure at sample {index}: {message}")]
    Oracle { index: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
