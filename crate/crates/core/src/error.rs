use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header in {path} at record {record}: dimension {dim}")]
    MalformedHeader { path: PathBuf, record: usize, dim: i32 },

    #[error("inconsistent dimension in {path} at record {record}: expected {expected}, got {actual}")]
    InconsistentDimension {
        path: PathBuf,
        record: usize,
        expected: usize,
        actual: usize,
    },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("bad magic in {path}: expected \"SNG1\"")]
    MagicMismatch { path: PathBuf },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
