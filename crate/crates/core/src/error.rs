use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: unsupported image format: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    /// Error raised while loading one manifest entry.
    #[error("entry {index}: {source}")]
    Entry {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Error raised while evaluating one fold of a cross-validation run.
    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through fold annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Fold { source, .. } | Error::Entry { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
