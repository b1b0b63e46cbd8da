//! Whole-plant evaluation: block, predict, merge, score.

use std::path::PathBuf;

use rosepoint_core::{compute_metrics, ClassScores, LabeledPointCloud, MetricsReport, PartLabel};
use rosepoint_networks::Checkpoint;
use rosepoint_preprocess::{merge_predictions, BlockSpec, SampledBlock};

use crate::data::{cloud_blocks, load_clouds, par_map};
use crate::record::CloudReport;
use crate::{HarnessError, Result};

const BATCH: usize = 16;

/// Anything that scores sampled blocks.
pub trait BlockPredictor: Sync {
    fn predict(&self, blocks: &[SampledBlock]) -> Result<Vec<ClassScores>>;
}

impl BlockPredictor for Checkpoint {
    fn predict(&self, blocks: &[SampledBlock]) -> Result<Vec<ClassScores>> {
        let mut out = Vec::with_capacity(blocks.len());
        for chunk in blocks.chunks(BATCH) {
            out.extend(self.forward_batch(chunk)?);
        }
        Ok(out)
    }
}

/// Returns the ground truth of each block as one-hot scores.
pub struct OraclePredictor;

impl BlockPredictor for OraclePredictor {
    fn predict(&self, blocks: &[SampledBlock]) -> Result<Vec<ClassScores>> {
        blocks
            .iter()
            .map(|b| {
                b.labels
                    .as_ref()
                    .map(|l| ClassScores::one_hot(l))
                    .ok_or_else(|| HarnessError::NoData("oracle needs labeled blocks".into()))
            })
            .collect()
    }
}

/// Predicts the same class everywhere.
pub struct ConstantPredictor(pub PartLabel);

impl BlockPredictor for ConstantPredictor {
    fn predict(&self, blocks: &[SampledBlock]) -> Result<Vec<ClassScores>> {
        Ok(blocks.iter().map(|b| ClassScores::one_hot(&vec![self.0; b.len()])).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_cloud: Vec<CloudReport>,
    pub macro_report: MetricsReport,
}

/// Merged per-point labels of every cloud.
pub fn predict_clouds(
    predictor: &dyn BlockPredictor,
    clouds: &[LabeledPointCloud],
    spec: &BlockSpec,
    seed: u64,
) -> Result<Vec<Vec<PartLabel>>> {
    let blocks = cloud_blocks(clouds, spec, seed)?;
    let pairs: Vec<(&LabeledPointCloud, Vec<SampledBlock>)> = clouds.iter().zip(blocks).collect();
    par_map(&pairs, |_, (cloud, blocks)| {
        let scores = predictor.predict(blocks)?;
        let scored: Vec<(SampledBlock, ClassScores)> = blocks.iter().cloned().zip(scores).collect();
        Ok(merge_predictions(cloud.len(), &scored)?)
    })
    .into_iter()
    .collect()
}

pub fn evaluate_clouds(
    predictor: &dyn BlockPredictor,
    clouds: &[LabeledPointCloud],
    spec: &BlockSpec,
    seed: u64,
) -> Result<Evaluation> {
    if clouds.is_empty() {
        return Err(HarnessError::NoData("no test clouds".into()));
    }
    let predictions = predict_clouds(predictor, clouds, spec, seed)?;
    let mut per_cloud = Vec::with_capacity(clouds.len());
    for (cloud, pred) in clouds.iter().zip(&predictions) {
        let gt = cloud.labels().ok_or_else(|| HarnessError::NoData(format!("test cloud {} is unlabeled", cloud.name)))?;
        per_cloud.push(CloudReport { cloud: cloud.name.clone(), report: compute_metrics(pred, gt)? });
    }
    let reports: Vec<MetricsReport> = per_cloud.iter().map(|c| c.report.clone()).collect();
    Ok(Evaluation { macro_report: MetricsReport::macro_mean(&reports)?, per_cloud })
}

/// Evaluates labeled clouds stored on disk.
pub fn evaluate(predictor: &dyn BlockPredictor, test_clouds: &[PathBuf], spec: &BlockSpec, seed: u64) -> Result<Evaluation> {
    evaluate_clouds(predictor, &load_clouds(test_clouds)?, spec, seed)
}
