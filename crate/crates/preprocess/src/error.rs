use std::path::PathBuf;

use rosepoint_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid block spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{} source points are covered by no block (first: {:?})", missing.len(), &missing[..missing.len().min(10)])]
    Coverage { missing: Vec<usize> },
    #[error("malformed block archive: {0}")]
    Archive(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}
