//! Labeling a single plant.

use std::fs;
use std::path::{Path, PathBuf};

use rosepoint_core::{compute_metrics, load_cloud, save_cloud, MetricsReport};
use rosepoint_preprocess::BlockSpec;

use crate::error::io_err;
use crate::evaluate::{predict_clouds, BlockPredictor};
use crate::Result;

/// Path of the metrics CSV written next to a segmented cloud.
pub fn metrics_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push("_metrics.csv");
    out.with_file_name(name)
}

/// Writes `cloud` with predicted labels to `out`. For a labeled input the
/// metrics against its labels are written too and returned.
pub fn segment(
    predictor: &dyn BlockPredictor,
    cloud: impl AsRef<Path>,
    out: impl AsRef<Path>,
    spec: &BlockSpec,
    seed: u64,
) -> Result<Option<MetricsReport>> {
    let input = load_cloud(cloud)?;
    let out = out.as_ref();
    let pred = predict_clouds(predictor, std::slice::from_ref(&input), spec, seed)?.pop().expect("one cloud");
    let report = match input.labels() {
        Some(gt) => Some(compute_metrics(&pred, gt)?),
        None => None,
    };
    save_cloud(&input.with_labels(pred)?, out)?;
    if let Some(r) = &report {
        let path = metrics_path(out);
        fs::write(&path, r.to_csv()).map_err(io_err(path))?;
    }
    Ok(report)
}
