use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_core::{derive_seed, LabeledPointCloud, Point3};

use crate::{BlockSpec, PreprocessError, RawBlock, Result, SampledBlock};

/// Grid offsets used for training and inference, in cm.
pub const DEFAULT_OFFSETS: [f64; 2] = [0.0, 5.0];

fn min_corner(positions: &[Point3]) -> Point3 {
    positions.iter().fold([f64::INFINITY; 3], |lo, p| std::array::from_fn(|k| lo[k].min(p[k])))
}

/// Minimum corner of `cell` in the source frame.
pub fn cell_origin(min: Point3, cell: [i64; 3], spec: &BlockSpec) -> Point3 {
    std::array::from_fn(|k| min[k] - spec.offset + cell[k] as f64 * spec.edge)
}

/// Groups point indices by cubic cell, in lexicographic cell order.
pub fn partition(cloud: &LabeledPointCloud, spec: &BlockSpec) -> Result<Vec<RawBlock>> {
    spec.validate()?;
    let min = min_corner(cloud.positions());
    let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.positions().iter().enumerate() {
        let cell = std::array::from_fn(|k| ((p[k] - min[k] + spec.offset) / spec.edge).floor() as i64);
        cells.entry(cell).or_default().push(i);
    }
    Ok(cells.into_iter().map(|(cell_index, point_indices)| RawBlock { cell_index, point_indices }).collect())
}

fn cell_distance2(a: [i64; 3], b: [i64; 3]) -> i64 {
    (0..3).map(|k| (a[k] - b[k]).pow(2)).sum()
}

/// Index into `candidates` of the block nearest to `cell`, ties broken by
/// lexicographic cell index.
fn nearest(cell: [i64; 3], blocks: &[RawBlock], candidates: &[usize]) -> usize {
    *candidates
        .iter()
        .min_by_key(|&&j| (cell_distance2(cell, blocks[j].cell_index), blocks[j].cell_index))
        .expect("at least one candidate")
}

/// Folds every block below the size threshold into the nearest surviving
/// block. When every block is undersized the smallest one is merged into its
/// nearest neighbor repeatedly until a block reaches the threshold or only
/// one remains.
pub fn reassign_small(blocks: Vec<RawBlock>, spec: &BlockSpec) -> Vec<RawBlock> {
    let threshold = spec.threshold();
    let mut blocks = blocks;
    blocks.sort_by_key(|b| b.cell_index);
    while blocks.len() > 1 {
        let (small, large): (Vec<usize>, Vec<usize>) =
            (0..blocks.len()).partition(|&i| (blocks[i].point_indices.len() as f64) < threshold);
        if small.is_empty() {
            break;
        }
        if large.is_empty() {
            let victim = *small
                .iter()
                .min_by_key(|&&i| (blocks[i].point_indices.len(), blocks[i].cell_index))
                .expect("non-empty");
            let others: Vec<usize> = (0..blocks.len()).filter(|&i| i != victim).collect();
            let target = nearest(blocks[victim].cell_index, &blocks, &others);
            let moved = std::mem::take(&mut blocks[victim].point_indices);
            blocks[target].point_indices.extend(moved);
            blocks.remove(victim);
            continue;
        }
        for &s in &small {
            let target = nearest(blocks[s].cell_index, &blocks, &large);
            let moved = std::mem::take(&mut blocks[s].point_indices);
            blocks[target].point_indices.extend(moved);
        }
        blocks.retain(|b| !b.point_indices.is_empty());
    }
    blocks
}

/// Adds copies of points in sparse voxels until every non-empty voxel holds
/// at least the rounded mean voxel count. Returns the original indices
/// followed by the copies in voxel order.
pub fn voxel_balance(positions: &[Point3], block: &RawBlock, origin: Point3, spec: &BlockSpec, seed: u64) -> Vec<usize> {
    let mut voxels: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for &i in &block.point_indices {
        let p = positions[i];
        let key = std::array::from_fn(|k| ((p[k] - origin[k]) / spec.voxel_grid).floor() as i64);
        voxels.entry(key).or_default().push(i);
    }
    let mut out = block.point_indices.clone();
    if voxels.is_empty() {
        return out;
    }
    let avg = ((block.point_indices.len() as f64 / voxels.len() as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in voxels.values() {
        for _ in members.len()..avg {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    out
}

/// Splits balanced indices into blocks of exactly `n_points` indices.
pub fn sample_fixed(balanced: &[usize], spec: &BlockSpec, seed: u64) -> Vec<Vec<usize>> {
    let n = spec.n_points;
    if balanced.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pad = |mut block: Vec<usize>, rng: &mut ChaCha8Rng| {
        let pool = block.len();
        while block.len() < n {
            let pick = block[rng.random_range(0..pool)];
            block.push(pick);
        }
        block.shuffle(rng);
        block
    };
    if balanced.len() < n {
        return vec![pad(balanced.to_vec(), &mut rng)];
    }
    let mut shuffled = balanced.to_vec();
    shuffled.shuffle(&mut rng);
    let kept = shuffled.len() - shuffled.len() % n;
    let mut keep_remainder = kept < shuffled.len() && (shuffled.len() - kept) as f64 >= spec.threshold();
    if !keep_remainder && kept < shuffled.len() {
        keep_remainder = !rescue_remainder(&mut shuffled, kept);
    }
    let mut out: Vec<Vec<usize>> = shuffled[..kept].chunks_exact(n).map(<[usize]>::to_vec).collect();
    if keep_remainder {
        out.push(pad(shuffled[kept..].to_vec(), &mut rng));
    }
    out
}

/// Before a short remainder `list[kept..]` is dropped, swaps every point it
/// alone holds with a duplicated entry of the kept part, so no source point
/// is lost. Returns `false` when too few duplicates exist.
fn rescue_remainder(list: &mut [usize], kept: usize) -> bool {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &i in &list[..kept] {
        *counts.entry(i).or_default() += 1;
    }
    let mut cursor = 0;
    for t in kept..list.len() {
        let v = list[t];
        if counts.get(&v).is_some_and(|&c| c > 0) {
            continue;
        }
        while cursor < kept && counts[&list[cursor]] < 2 {
            cursor += 1;
        }
        if cursor == kept {
            return false;
        }
        *counts.get_mut(&list[cursor]).unwrap() -= 1;
        counts.insert(v, 1);
        list.swap(cursor, t);
        cursor += 1;
    }
    true
}

/// Full preprocessing chain for every offset in `offsets`.
pub fn make_blocks(cloud: &LabeledPointCloud, spec_base: &BlockSpec, offsets: &[f64], seed: u64) -> Result<Vec<SampledBlock>> {
    if offsets.is_empty() {
        return Err(PreprocessError::Argument("at least one offset is required".into()));
    }
    let min = min_corner(cloud.positions());
    let mut out = Vec::new();
    for (o, &offset) in offsets.iter().enumerate() {
        let spec = spec_base.with_offset(offset);
        let raw = reassign_small(partition(cloud, &spec)?, &spec);
        let offset_seed = derive_seed(seed, o as u64);
        for (b, block) in raw.iter().enumerate() {
            let block_seed = derive_seed(offset_seed, b as u64);
            let origin = cell_origin(min, block.cell_index, &spec);
            let balanced = voxel_balance(cloud.positions(), block, origin, &spec, derive_seed(block_seed, 0));
            for indices in sample_fixed(&balanced, &spec, derive_seed(block_seed, 1)) {
                out.push(SampledBlock::from_indices(cloud, indices, origin, spec.edge, offset)?);
            }
        }
    }
    Ok(out)
}
