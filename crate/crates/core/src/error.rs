use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input is shorter than an operation needs.
    #[error("length error: {0}")]
    Length(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure{}: {message}", window.map(|w| format!(" in window {w}")).unwrap_or_default())]
    Numeric {
        window: Option<usize>,
        message: String,
    },

    #[error("tracker initialization failed: {0}")]
    Init(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Attaches a window index to numeric failures.
    pub fn in_window(self, index: usize) -> Self {
        match self {
            Error::Numeric { message, .. } => Error::Numeric {
                window: Some(index),
                message,
            },
            other => other,
        }
    }

    pub(crate) fn length(msg: impl Into<String>) -> Self {
        Error::Length(msg.into())
    }
}
