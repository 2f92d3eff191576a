use mfgkit::MfgError;
use thiserror::Error;

/// Exit codes are a stable scripting contract.
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unknown registry names, malformed `key=value`.
    #[error("{0}")]
    Usage(String),
    /// Input files that parse but violate an invariant, or do not parse.
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Writing output failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    /// Maps a library error raised while setting up or running a solve.
    pub fn from_core(e: MfgError) -> Self {
        match e {
            MfgError::Unknown { .. } | MfgError::InvalidParameter { .. } | MfgError::EmptySuite => {
                CliError::Usage(e.to_string())
            }
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
