use std::path::{Path, PathBuf};

use convboost_core::Error as CoreError;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const GENERIC: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const DATA: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
    pub const CORRUPT: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("incomplete run: {0}")]
    Incomplete(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Incomplete(_) => exit::GENERIC,
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Json { .. } => exit::DATA,
            CliError::Core(e) => match e {
                CoreError::Io { .. } => exit::GENERIC,
                CoreError::Config(_) => exit::CONFIG,
                CoreError::Divergence { .. } => exit::DIVERGENCE,
                CoreError::Mismatch(_) => exit::CONFIG,
                CoreError::Corrupt(_) => exit::CORRUPT,
                CoreError::Parse { .. }
                | CoreError::MissingColumn { .. }
                | CoreError::Empty(_)
                | CoreError::ChannelMismatch { .. }
                | CoreError::Shape(_)
                | CoreError::Data(_)
                | CoreError::OutOfRange(_) => exit::DATA,
            },
        }
    }
}
