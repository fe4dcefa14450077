use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, Error>;

/// A malformed byte stream; `offset` is where decoding stopped.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("at byte {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: format error {source}", path.display())]
    Format { path: PathBuf, source: FormatError },

    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] groto_core::Error),

    #[error("incomplete runs (no summary.json): {}", .0.join(", "))]
    Incomplete(Vec<String>),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 2 configuration, 3 data or file format,
    /// 4 training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Data { .. } | Error::Incomplete(_) => 3,
            Error::Core(e) => match e {
                groto_core::Error::Config { .. } => 2,
                groto_core::Error::Dimension(_) => 3,
                _ => 4,
            },
        }
    }
}
