use std::path::PathBuf;

/// Failures surfaced by the command-line layer. Configuration problems and
/// runtime problems map to distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_RUNTIME: i32 = 3;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Io { .. } | CliError::Runtime(_) => Self::EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<chainttt_core::Error> for CliError {
    fn from(e: chainttt_core::Error) -> Self {
        match e {
            chainttt_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
