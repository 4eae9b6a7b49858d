use std::path::{Path, PathBuf};

/// Process exit codes.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERICAL: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Bad file contents; `location` names the cell when there is one.
    #[error("{}: {kind} error{location}: {message}", path.display())]
    Data {
        path: PathBuf,
        kind: DataKind,
        location: String,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] idm_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data { .. } | CliError::Io { .. } => exit::DATA,
            CliError::Core(e) if e.is_input_error() => exit::DATA,
            CliError::Core(_) => exit::NUMERICAL,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn data(path: &Path, kind: DataKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            kind,
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Format,
    Shape,
    Validation,
}

impl std::fmt::Display for DataKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DataKind::Format => "format",
            DataKind::Shape => "shape",
            DataKind::Validation => "validation",
        })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
