use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint does not fit the model spec: {}", .0.join("; "))]
    Compatibility(Vec<String>),
    #[error("no training blocks: {0}")]
    NoData(String),
    #[error(transparent)]
    Core(#[from] rosepoint_core::CoreError),
    #[error(transparent)]
    Preprocess(#[from] rosepoint_preprocess::PreprocessError),
    #[error(transparent)]
    Network(#[from] rosepoint_networks::NetworkError),
    #[error(transparent)]
    Synth(#[from] rosepoint_synthgen::SynthError),
    #[error(transparent)]
    Autodiff(#[from] rosepoint_autodiff::AutodiffError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
