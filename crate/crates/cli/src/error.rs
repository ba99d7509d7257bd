use smoothcert::Error;
use thiserror::Error;

/// Failures surfaced by the command line, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Domain(msg) | Error::Config(msg) => CliError::Config(msg),
            Error::Parse { .. } | Error::InvalidRecord { .. } | Error::Oracle { .. } | Error::Io(_) => {
                CliError::Data(err.to_string())
            }
            Error::Solver(msg) => CliError::Solver(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}
