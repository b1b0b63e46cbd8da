//! Block assembly for training and evaluation.

use std::path::PathBuf;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rosepoint_core::{derive_seed, load_cloud, LabeledPointCloud};
use rosepoint_preprocess::{make_blocks, BlockSpec, SampledBlock, DEFAULT_OFFSETS};

use crate::{HarnessError, Result};

const SPLIT_STREAM: u64 = 0x5b1;

/// Training and validation blocks of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSplit {
    pub train: Vec<SampledBlock>,
    pub validation: Vec<SampledBlock>,
}

pub fn load_clouds(paths: &[PathBuf]) -> Result<Vec<LabeledPointCloud>> {
    paths.iter().map(|p| Ok(load_cloud(p)?)).collect()
}

/// Runs `f` over `items` on a small worker pool, keeping the input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                s.spawn(move || part.iter().enumerate().map(|(i, t)| f(c * chunk + i, t)).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Blocks of every cloud at the default offsets, cloud `i` seeded with
/// `derive_seed(seed, i)`.
pub fn cloud_blocks(clouds: &[LabeledPointCloud], spec: &BlockSpec, seed: u64) -> Result<Vec<Vec<SampledBlock>>> {
    par_map(clouds, |i, c| make_blocks(c, spec, &DEFAULT_OFFSETS, derive_seed(seed, i as u64)).map_err(HarnessError::from))
        .into_iter()
        .collect()
}

/// Pools the blocks of all clouds, shuffles them with `seed` and holds out
/// `val_fraction` of them (at least one when two or more exist).
pub fn split_blocks(blocks: Vec<SampledBlock>, val_fraction: f64, seed: u64) -> Result<BlockSplit> {
    if blocks.is_empty() {
        return Err(HarnessError::NoData("the training clouds produced no blocks".into()));
    }
    if let Some(i) = blocks.iter().position(|b| b.labels.is_none()) {
        return Err(HarnessError::NoData(format!("block {i} has no labels")));
    }
    let mut blocks = blocks;
    blocks.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM)));
    let n = blocks.len();
    let n_val = if n < 2 { 0 } else { ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1) };
    let validation = blocks.split_off(n - n_val);
    Ok(BlockSplit { train: blocks, validation })
}

/// Loads, blocks and splits the training clouds of an experiment.
pub fn training_blocks(paths: &[PathBuf], spec: &BlockSpec, val_fraction: f64, seed: u64) -> Result<BlockSplit> {
    let clouds = load_clouds(paths)?;
    if let Some(c) = clouds.iter().find(|c| !c.is_labeled()) {
        return Err(HarnessError::NoData(format!("training cloud {} is unlabeled", c.name)));
    }
    let blocks = cloud_blocks(&clouds, spec, seed)?.into_iter().flatten().collect();
    split_blocks(blocks, val_fraction, seed)
}
