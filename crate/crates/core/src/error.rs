use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    /// Training sources overlap the evaluation sources. Kept apart from
    /// [`Error::Validation`] because it invalidates the cross-source protocol
    /// rather than a single record.
    #[error("cross-source violation: source(s) {sources:?} appear in both train and valid/test")]
    CrossSource { sources: Vec<String> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("bad file format in {path}: {message}")]
    Format { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Other,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Argument(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::CrossSource { .. }
            | Error::Format { .. }
            | Error::Json(_) => ErrorClass::Data,
            Error::NotPositiveDefinite { .. } | Error::Numerical(_) => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Other,
        }
    }

    /// Exit code: 2 config, 3 data validation, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
            ErrorClass::Other => 1,
        }
    }
}
