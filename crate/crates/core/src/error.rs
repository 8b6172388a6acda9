use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable class used by the command-line front end.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::State(_) => "state",
            Error::Domain(_) => "domain",
            Error::Input(_) => "input",
            Error::Divergence { .. } => "divergence",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
