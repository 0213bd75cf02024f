use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] vacalib_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    /// A well-formed file whose contents are rejected.
    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: vacalib_core::Error,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("no asset for {key}; available: {}", if available.is_empty() { "none".to_string() } else { available.join(", ") })]
    AssetNotFound { key: String, available: Vec<String> },

    #[error("input digest mismatch for {}: recorded {recorded}, found {found}", path.display())]
    DigestMismatch {
        path: PathBuf,
        recorded: String,
        found: String,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Attaches `path` to errors raised by the core library.
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            CliError::Core(source) => CliError::Input {
                path: path.into(),
                source,
            },
            other => other,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}
