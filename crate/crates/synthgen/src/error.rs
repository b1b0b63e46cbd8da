use std::path::PathBuf;

use rosepoint_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("no plant within the target height range after {attempts} attempts (last extent {last_extent:.2} cm)")]
    Generation { attempts: usize, last_extent: f64 },
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("dataset error at {path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}
