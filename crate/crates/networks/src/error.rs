use rosepoint_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("block has {got} points, model expects {expected}")]
    PointCount { expected: usize, got: usize },
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Core(#[from] rosepoint_core::CoreError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
