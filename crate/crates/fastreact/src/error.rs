use std::io;

use fastreact_core::Error as CoreError;

/// Everything a command can fail with. Each variant maps to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("solver failure: {0}")]
    Solver(CoreError),

    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },

    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Wraps a core error raised while validating `section`, qualifying a
    /// parameter name into a config key such as `scheme.tau`.
    pub fn from_core(section: &str, e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { name, reason } => {
                CliError::config(format!("{section}.{name}"), reason)
            }
            other => CliError::config(section, other.to_string()),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 0 success, 1 config or I/O error, 2 solver failure, 3 failed check.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 1,
            CliError::Solver(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Solver(e)
    }
}
