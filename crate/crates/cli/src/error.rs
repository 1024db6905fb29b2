use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes; `2` is reserved for command-line usage errors.
pub mod exit {
    pub const IO: i32 = 1;
    pub const MISSING_FILE: i32 = 3;
    pub const MALFORMED: i32 = 4;
    pub const SCHEMA: i32 = 5;
    pub const INVARIANT: i32 = 6;
    pub const ESTIMATOR: i32 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("schema violation at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("invalid configuration: `{key}` {message}")]
    Invariant { key: String, message: String },
    #[error("estimator failed at {context}: {source}")]
    Estimator {
        context: String,
        source: uwbbounds_core::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile { .. } => exit::MISSING_FILE,
            CliError::Malformed(_) => exit::MALFORMED,
            CliError::Schema { .. } => exit::SCHEMA,
            CliError::Invariant { .. } => exit::INVARIANT,
            CliError::Estimator { .. } => exit::ESTIMATOR,
            CliError::Io(_) | CliError::Csv(_) => exit::IO,
        }
    }

    pub(crate) fn invariant(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invariant {
            key: key.into(),
            message: message.into(),
        }
    }
}
