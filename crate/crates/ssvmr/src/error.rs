use std::path::PathBuf;

/// Errors surfaced by file handling and the command line. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: malformed data at byte {offset}: {reason}")]
    Format { path: PathBuf, offset: u64, reason: String },
    #[error("{path}: line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] ssvmr_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), reason: reason.into() }
    }

    /// 2 config, 3 data format, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use ssvmr_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Core(E::Config { .. }) => 2,
            CliError::Format { .. } | CliError::Manifest { .. } => 3,
            CliError::Core(E::Numeric(_) | E::Degenerate(_)) => 4,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}
