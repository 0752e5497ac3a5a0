use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] manigraph_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("unsupported bundle format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Distinct process exit codes: usage 2, data 3, numeric 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Split(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Checksum { .. } | Error::Version { .. } => 3,
            Error::Core(manigraph_core::Error::CgStalled { .. })
            | Error::Core(manigraph_core::Error::SingularSystem(_))
            | Error::Core(manigraph_core::Error::NonFinite(_)) => 4,
            Error::Core(_) => 3,
            Error::Other(_) => 1,
        }
    }
}
