//! Per-run records.

use std::fs;
use std::path::Path;

use rosepoint_core::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::error::io_err;
use crate::{ExperimentTag, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudReport {
    pub cloud: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tag: ExperimentTag,
    pub architecture: String,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub test: Vec<CloudReport>,
    pub macro_report: Option<MetricsReport>,
    /// Seconds spent training and evaluating.
    pub wall_clock: f64,
}

impl RunRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunRecord> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn final_epoch(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}
