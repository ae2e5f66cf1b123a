use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed transcript content. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record that parsed but violates the file schema (bad JSON, broken invariant).
    #[error("{source_name}:{line}: {message}")]
    Schema { source_name: String, line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vocabulary mismatch: bag dimensions {left} and {right}")]
    VocabularyMismatch { left: usize, right: usize },

    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn schema(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Schema { source_name: source_name.into(), line, message: message.into() }
    }
}
