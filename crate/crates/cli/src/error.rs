use nclab_core::Error as CoreError;
use std::path::Path;
use thiserror::Error;

pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Verify(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Core(CoreError::NonFinite(_)) => EXIT_DIVERGED,
            CliError::Core(_) => EXIT_CONFIG,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<nclab_core::densemat::LinalgError> for CliError {
    fn from(e: nclab_core::densemat::LinalgError) -> Self {
        CliError::Core(e.into())
    }
}
