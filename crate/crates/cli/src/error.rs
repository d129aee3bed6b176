use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const TOLERANCE: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const NUMERIC: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// A scenario or command-line value failed validation; `path` locates
    /// the offending field.
    #[error("invalid input at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric failure during {stage}: {source}")]
    Numeric {
        stage: &'static str,
        #[source]
        source: ltransport::Error,
    },
}

impl CliError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema { .. } | CliError::Io { .. } => exit::INPUT,
            CliError::Numeric { .. } => exit::NUMERIC,
        }
    }
}

/// Tags a core error with the stage that produced it.
pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for ltransport::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numeric { stage, source })
    }
}
