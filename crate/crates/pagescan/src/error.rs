use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("file truncated in entry {entry} (needed {needed} bytes at offset {offset}, {available} available)")]
    Truncated { entry: usize, offset: usize, needed: usize, available: usize },
    #[error("invalid entry {entry}: {detail}")]
    Validation { entry: usize, detail: String },
    #[error("entry {entry} has dims {found}, expected {expected}")]
    DimensionMismatch { entry: usize, expected: usize, found: usize },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("ingestion failed for {path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error("{0}: volume has no pages")]
    EmptyVolume(PathBuf),
    #[error("embedder: {0}")]
    Embedder(String),
    #[error(transparent)]
    Core(#[from] pagescan_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
