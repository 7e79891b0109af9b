use std::io;
use std::path::PathBuf;

use selda_core::gait::TrialError;
use selda_core::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config file not found: {}", .0.display())]
    ConfigNotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Bad config text. `origin` is a file path or `--set`.
    #[error("{origin}: {source}")]
    Config {
        origin: String,
        #[source]
        source: ConfigError,
    },
    /// Malformed CSV input.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("trial `{label}`: {error}")]
    Trial { label: String, error: Box<TrialError> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for simulation aborts, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Trial { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
