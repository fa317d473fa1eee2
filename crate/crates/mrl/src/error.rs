use std::path::PathBuf;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] mrl_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::Format { path: path.into(), msg: msg.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        use mrl_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::Config(_)) => EXIT_USAGE,
            CliError::Precondition(_) | CliError::Format { .. } => EXIT_PRECONDITION,
            CliError::Core(E::Validation(_)) => EXIT_PRECONDITION,
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_PRECONDITION,
            _ => EXIT_FAILURE,
        }
    }

    /// Message plus one line per validation issue.
    pub fn report(&self) -> String {
        let mut s = self.to_string();
        if let CliError::Core(mrl_core::Error::Validation(issues)) = self {
            for i in issues {
                s.push_str(&format!("\n  {i}"));
            }
        }
        s
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
