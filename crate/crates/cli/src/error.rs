use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid configuration.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    /// Model assumptions fail and no override was given.
    #[error("assumption check failed: {0}")]
    Assumption(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} already exists (use --force to overwrite)")]
    Collision(PathBuf),
    #[error(transparent)]
    Model(#[from] qhawkes_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Assumption(_) => 3,
            CliError::Model(qhawkes_core::Error::Precondition(_)) => 3,
            _ => 4,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
