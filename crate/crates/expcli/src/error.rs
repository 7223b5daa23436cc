use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),

    #[error("numerical failure at {context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: kdlab_core::Error,
    },

    #[error("tolerance breached in {0}")]
    Tolerance(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 configuration, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dataset(DatasetError::Io { .. }) => 4,
            CliError::Dataset(_) => 2,
            CliError::Numerical { .. } | CliError::Tolerance(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a sweep-point description to core errors.
pub trait Context<T> {
    fn at(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for kdlab_core::Result<T> {
    fn at(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| match source {
            kdlab_core::Error::InvalidConfig(msg) => CliError::Config(format!("{}: {msg}", context())),
            source => CliError::Numerical {
                context: context(),
                source,
            },
        })
    }
}
