//! Mini-batch training and layer-masked fine-tuning.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rosepoint_autodiff::adam_step;
use rosepoint_core::{derive_seed, Point3};
use rosepoint_networks::{build_model, Checkpoint, ModelSpec, Provenance, TrainMask};
use rosepoint_preprocess::SampledBlock;

use crate::data::training_blocks;
use crate::experiment::check_compatible;
use crate::record::{EpochStats, RunRecord};
use crate::{ExperimentSpec, HarnessError, OptimizerSettings, Result};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5afe;
const EVAL_BATCH: usize = 16;

/// Blocks converted to the network's input form.
struct Prepared {
    positions: Vec<Vec<Point3>>,
    labels: Vec<Vec<usize>>,
}

fn prepare(blocks: &[SampledBlock], n_points: usize) -> Result<Prepared> {
    let mut positions = Vec::with_capacity(blocks.len());
    let mut labels = Vec::with_capacity(blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        if b.len() != n_points {
            return Err(HarnessError::Config(format!("block {i} has {} points, the model expects {n_points}", b.len())));
        }
        let l = b.labels.as_ref().ok_or_else(|| HarnessError::NoData(format!("block {i} has no labels")))?;
        positions.push(b.centered_positions());
        labels.push(l.iter().map(|p| p.index()).collect());
    }
    Ok(Prepared { positions, labels })
}

/// Mean cross-entropy and accuracy of `ckpt` in evaluation mode.
pub fn evaluate_blocks(ckpt: &Checkpoint, blocks: &[SampledBlock]) -> Result<(f64, f64)> {
    let data = prepare(blocks, ckpt.spec.n_points)?;
    let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
    for (pos, lab) in data.positions.chunks(EVAL_BATCH).zip(data.labels.chunks(EVAL_BATCH)) {
        for (scores, labels) in ckpt.scores(pos)?.iter().zip(lab) {
            for (row, &l) in scores.rows().iter().zip(labels) {
                loss -= row[l].max(1e-12).ln();
                correct += usize::from(rosepoint_core::argmax_row(row).index() == l);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok((loss / total as f64, correct as f64 / total as f64))
}

/// Trains `ckpt` in place for `epochs` epochs and returns the epoch series.
/// Only parameters allowed by `mask` are updated; the optimizer state starts
/// fresh. Running batch-norm statistics follow the batches of trainable layers.
pub fn train_blocks(
    ckpt: &mut Checkpoint,
    train: &[SampledBlock],
    validation: &[SampledBlock],
    settings: &OptimizerSettings,
    epochs: usize,
    mask: &TrainMask,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    train_blocks_until(ckpt, train, validation, settings, epochs, mask, seed, |_, _| Ok(true))
}

/// [`train_blocks`] with a callback after every epoch; training stops early
/// when it returns `false`.
#[allow(clippy::too_many_arguments)]
pub fn train_blocks_until(
    ckpt: &mut Checkpoint,
    train: &[SampledBlock],
    validation: &[SampledBlock],
    settings: &OptimizerSettings,
    epochs: usize,
    mask: &TrainMask,
    seed: u64,
    mut keep_going: impl FnMut(&Checkpoint, &EpochStats) -> Result<bool>,
) -> Result<Vec<EpochStats>> {
    if train.is_empty() && epochs > 0 {
        return Err(HarnessError::NoData("no training blocks".into()));
    }
    let data = prepare(train, ckpt.spec.n_points)?;
    let mut state = settings.state()?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut series = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, SHUFFLE_STREAM), epoch as u64)));
        let (mut loss_sum, mut correct, mut points) = (0.0, 0usize, 0usize);
        for batch in order.chunks(settings.batch_size) {
            let positions: Vec<Vec<Point3>> = batch.iter().map(|&i| data.positions[i].clone()).collect();
            let labels: Vec<usize> = batch.iter().flat_map(|&i| data.labels[i].iter().copied()).collect();
            let step = ckpt.loss_and_gradients(&positions, &labels, mask)?;
            let mut params = ckpt.trainable(mask);
            adam_step(&mut params, &step.gradients, &mut state)?;
            ckpt.assign(params)?;
            ckpt.update_running_stats(&step.stats);
            loss_sum += step.loss * labels.len() as f64;
            correct += step.correct;
            points += labels.len();
        }
        let (val_loss, val_acc) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_blocks(ckpt, validation)?;
            (Some(l), Some(a))
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / points as f64,
            train_acc: correct as f64 / points as f64,
            val_loss,
            val_acc,
        };
        series.push(stats);
        if !keep_going(ckpt, &stats)? {
            break;
        }
    }
    Ok(series)
}

/// Starting point of an experiment: a fresh initialization, or the pretrained
/// checkpoint for transfer tags.
pub fn initial_checkpoint(spec: &ExperimentSpec, model: &ModelSpec) -> Result<Checkpoint> {
    model.validate()?;
    match &spec.pretrain_checkpoint {
        Some(path) if spec.tag.is_transfer() => {
            let mut ckpt = Checkpoint::load(path)?;
            check_compatible(&ckpt, model)?;
            ckpt.spec = model.clone();
            Ok(ckpt)
        }
        _ => Ok(build_model(model, derive_seed(spec.seed, INIT_STREAM))?),
    }
}

/// Trains one experiment and returns the last-epoch checkpoint with its record.
pub fn train(spec: &ExperimentSpec, model: &ModelSpec, settings: &OptimizerSettings) -> Result<(Checkpoint, RunRecord)> {
    spec.validate()?;
    if spec.block.n_points != model.n_points {
        return Err(HarnessError::Config(format!(
            "blocks hold {} points, the model expects {}",
            spec.block.n_points, model.n_points
        )));
    }
    let start = Instant::now();
    let mut ckpt = initial_checkpoint(spec, model)?;
    let split = training_blocks(&spec.train_clouds, &spec.block, spec.val_fraction, spec.seed)?;
    let mask = spec.train_mask(&ckpt);
    let epochs = train_blocks(&mut ckpt, &split.train, &split.validation, settings, spec.epochs, &mask, spec.seed)?;
    ckpt.provenance = Provenance { tag: spec.tag.name().to_string(), epochs: spec.epochs, seed: spec.seed };
    let record = RunRecord {
        tag: spec.tag,
        architecture: model.architecture.name().to_string(),
        seed: spec.seed,
        epochs,
        test: Vec::new(),
        macro_report: None,
        wall_clock: start.elapsed().as_secs_f64(),
    };
    Ok((ckpt, record))
}
