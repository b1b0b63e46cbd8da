//! Forward passes of the six architectures on the tape.
//!
//! Blocks in a batch are stacked row-wise: a level with `P` points holds
//! block `b` in rows `b·P .. (b+1)·P`. Neighborhood indices are computed per
//! block on centered positions and offset into the stacked rows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_autodiff::{BatchStats, NamedTensors, NormMode, Tape, Tensor, Var};
use rosepoint_core::{derive_seed, Point3};

use crate::geometry::{
    ball_query, dilated_knn, farthest_point_sampling, interpolation_weights, knn, knn_rows, ri_bin_order, ri_features, shell_groups,
};
use crate::spec::{Architecture, LayerRecord, ModelSpec};
use crate::{NetworkError, Result};

const BALL_SEED: u64 = 0xba11;

/// Result of a forward pass: `[B·n, n_classes]` logits plus the batch
/// statistics of every batch-norm layer (train mode only), keyed by prefix.
pub struct ForwardOutput {
    pub logits: Var,
    pub stats: Vec<(String, BatchStats)>,
}

/// Parameter binding state for one tape.
pub(crate) struct Ctx<'a> {
    pub tape: &'a mut Tape,
    weights: &'a NamedTensors,
    pub bound: BTreeMap<String, Var>,
    trainable: &'a dyn Fn(&str) -> bool,
    mode: NormMode,
    batch_norm: bool,
    init: Option<(NamedTensors, ChaCha8Rng)>,
    stats: Vec<(String, BatchStats)>,
}

enum Init {
    Kaiming(usize),
    Zeros,
    Ones,
}

impl<'a> Ctx<'a> {
    pub fn new(
        tape: &'a mut Tape,
        weights: &'a NamedTensors,
        trainable: &'a dyn Fn(&str) -> bool,
        mode: NormMode,
        batch_norm: bool,
    ) -> Self {
        Ctx { tape, weights, bound: BTreeMap::new(), trainable, mode, batch_norm, init: None, stats: Vec::new() }
    }

    /// Context that creates missing weights instead of failing.
    pub fn initializing(tape: &'a mut Tape, empty: &'a NamedTensors, batch_norm: bool, seed: u64) -> Self {
        static NONE: fn(&str) -> bool = |_| false;
        let mut ctx = Ctx::new(tape, empty, &NONE, NormMode::Eval, batch_norm);
        ctx.init = Some((NamedTensors::new(), ChaCha8Rng::seed_from_u64(seed)));
        ctx
    }

    pub fn into_created(self) -> NamedTensors {
        self.init.map(|(w, _)| w).unwrap_or_default()
    }

    pub fn into_stats(self) -> Vec<(String, BatchStats)> {
        self.stats
    }

    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.weights.get(name).or_else(|| self.init.as_ref().and_then(|(w, _)| w.get(name)))
    }

    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(t) = self.lookup(name) {
            if t.shape() != shape {
                return Err(NetworkError::Checkpoint(format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            return Ok(t.clone());
        }
        let Some((created, rng)) = self.init.as_mut() else {
            return Err(NetworkError::Checkpoint(format!("missing weight {name}")));
        };
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Kaiming(fan_in) => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        let t = Tensor::new(shape.to_vec(), data)?;
        created.insert(name.to_string(), t.clone());
        Ok(t)
    }

    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = self.tensor(name, shape, init)?;
        let v = if (self.trainable)(name) { self.tape.leaf(t.with_grad(true)) } else { self.tape.constant(t) };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// `x·W + b`, optionally batch-normalized, optionally rectified.
    pub fn dense(&mut self, name: &str, x: Var, out: usize, bn: bool, relu: bool) -> Result<Var> {
        let shape = self.tape.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(NetworkError::Argument(format!("{name}: dense input must be 2D, got {shape:?}")));
        }
        let fan_in = shape[1];
        let w = self.param(&format!("{name}.w"), &[fan_in, out], Init::Kaiming(fan_in))?;
        let b = self.param(&format!("{name}.b"), &[out], Init::Zeros)?;
        let mut y = self.tape.matmul(x, w)?;
        y = self.tape.add_bias(y, b)?;
        if bn && self.batch_norm {
            y = self.norm(name, y, out)?;
        }
        if relu {
            y = self.tape.relu(y)?;
        }
        Ok(y)
    }

    fn norm(&mut self, name: &str, y: Var, c: usize) -> Result<Var> {
        let gamma = self.param(&format!("{name}.gamma"), &[c], Init::Ones)?;
        let beta = self.param(&format!("{name}.beta"), &[c], Init::Zeros)?;
        let mean = self.tensor(&format!("{name}.mean"), &[c], Init::Zeros)?;
        let var = self.tensor(&format!("{name}.var"), &[c], Init::Ones)?;
        let frozen = !(self.trainable)(&format!("{name}.gamma"));
        let mode = if frozen && self.init.is_none() { NormMode::Eval } else { self.mode };
        let (out, stats) = match mode {
            NormMode::Eval => self.tape.batch_norm(y, gamma, beta, NormMode::Eval, Some((mean.data(), var.data())))?,
            NormMode::Train => self.tape.batch_norm(y, gamma, beta, NormMode::Train, None)?,
        };
        if let Some(s) = stats {
            self.stats.push((name.to_string(), s));
        }
        Ok(out)
    }

    /// Stack of hidden dense layers named `{prefix}.{j}`.
    pub fn mlp(&mut self, prefix: &str, mut x: Var, channels: &[usize], bn: bool) -> Result<Var> {
        for (j, &c) in channels.iter().enumerate() {
            x = self.dense(&format!("{prefix}.{j}"), x, c, bn, true)?;
        }
        Ok(x)
    }

    fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        Ok(self.tape.constant(Tensor::new(shape, data)?))
    }
}

/// One resolution of the point hierarchy.
#[derive(Clone)]
pub(crate) struct Level {
    /// Centered positions per block.
    pos: Vec<Vec<Point3>>,
    /// Stacked features `[B·P, C]`, `None` when the level carries no features.
    feat: Option<Var>,
}

impl Level {
    fn count(&self) -> usize {
        self.pos[0].len()
    }
}

/// Runs `spec` on a batch of centered blocks. Every block must hold exactly
/// `spec.n_points` rows.
pub(crate) fn run(ctx: &mut Ctx<'_>, spec: &ModelSpec, blocks: &[Vec<Point3>]) -> Result<Var> {
    if blocks.is_empty() {
        return Err(NetworkError::Argument("forward on an empty batch".into()));
    }
    for b in blocks {
        if b.len() != spec.n_points {
            return Err(NetworkError::PointCount { expected: spec.n_points, got: b.len() });
        }
    }
    let coords = ctx.constant(vec![blocks.len() * spec.n_points, 3], blocks.iter().flatten().flatten().copied().collect())?;
    let input = Level { pos: blocks.to_vec(), feat: Some(coords) };
    let hidden = match spec.architecture {
        Architecture::PointNet => pointnet(ctx, spec, input)?,
        Architecture::DGCNN => dgcnn(ctx, spec, input)?,
        Architecture::PointNetPP
        | Architecture::PointCNN
        | Architecture::ShellNet
        | Architecture::RIConv => encoder_decoder(ctx, spec, input)?,
    };
    let idx = spec.layers.len() - 1;
    let LayerRecord::Head { channels } = &spec.layers[idx] else {
        return Err(NetworkError::Spec("the last layer must be a head".into()));
    };
    let h = ctx.mlp(&format!("l{idx}"), hidden, channels, true)?;
    ctx.dense(&format!("l{idx}.out"), h, spec.n_classes, false, false)
}

fn offset_rows(groups: &[Vec<Vec<usize>>], stride: usize) -> Vec<usize> {
    groups.iter().enumerate().flat_map(|(b, g)| g.iter().flatten().map(move |&i| b * stride + i)).collect()
}

/// Rows that broadcast one global row per block to its `n` points.
fn broadcast_rows(blocks: usize, n: usize) -> Vec<usize> {
    (0..blocks).flat_map(|b| std::iter::repeat_n(b, n)).collect()
}

fn pointnet(ctx: &mut Ctx<'_>, spec: &ModelSpec, input: Level) -> Result<Var> {
    let (b, n) = (input.pos.len(), spec.n_points);
    let mut x = input.feat.expect("coordinates");
    if spec.t_net {
        x = t_net(ctx, x, b, n)?;
    }
    let mut local = None;
    let mut global = None;
    for (idx, layer) in spec.layers[..spec.layers.len() - 1].iter().enumerate() {
        let prefix = format!("l{idx}");
        match layer {
            LayerRecord::Mlp { channels } => {
                x = ctx.mlp(&prefix, x, channels, true)?;
                local.get_or_insert(x);
            }
            LayerRecord::GlobalFc { channels } => {
                let pooled = ctx.tape.reduce_max(x, n)?;
                global = Some(ctx.mlp(&prefix, pooled, channels, false)?);
            }
            other => return Err(NetworkError::Spec(format!("PointNet cannot use a {} layer", other.kind()))),
        }
    }
    let (local, global) = (local.expect("validated"), global.expect("validated"));
    let spread = ctx.tape.gather(global, &broadcast_rows(b, n))?;
    Ok(ctx.tape.concat(&[local, spread], 1)?)
}

/// Input alignment: predicts a 3×3 matrix per block, initialized to identity.
fn t_net(ctx: &mut Ctx<'_>, x: Var, b: usize, n: usize) -> Result<Var> {
    let h = ctx.mlp("l0.tnet", x, &[16, 64], true)?;
    let pooled = ctx.tape.reduce_max(h, n)?;
    let g = ctx.mlp("l0.tnet.fc", pooled, &[32], false)?;
    let name = "l0.tnet.out";
    let w = ctx.param(&format!("{name}.w"), &[32, 9], Init::Zeros)?;
    let bias_name = format!("{name}.b");
    if ctx.lookup(&bias_name).is_none() {
        if let Some((created, _)) = ctx.init.as_mut() {
            created.insert(bias_name.clone(), Tensor::new(vec![9], Tensor::eye(3).into_data())?);
        }
    }
    let bias = ctx.param(&bias_name, &[9], Init::Zeros)?;
    let m = ctx.tape.matmul(g, w)?;
    let m = ctx.tape.add_bias(m, bias)?;
    let m = ctx.tape.reshape(m, &[b, 3, 3])?;
    let pts = ctx.tape.reshape(x, &[b, n, 3])?;
    let aligned = ctx.tape.batched_matmul(pts, m)?;
    Ok(ctx.tape.reshape(aligned, &[b * n, 3])?)
}

fn dgcnn(ctx: &mut Ctx<'_>, spec: &ModelSpec, input: Level) -> Result<Var> {
    let (b, n) = (input.pos.len(), spec.n_points);
    let mut x = input.feat.expect("coordinates");
    let mut edges = Vec::new();
    let mut embedded = None;
    for (idx, layer) in spec.layers[..spec.layers.len() - 1].iter().enumerate() {
        let prefix = format!("l{idx}");
        match layer {
            LayerRecord::EdgeConv { k, channels } => {
                x = edge_conv(ctx, &prefix, x, b, n, *k, channels)?;
                edges.push(x);
            }
            LayerRecord::Mlp { channels } => {
                let cat = ctx.tape.concat(&edges, 1)?;
                let emb = ctx.mlp(&prefix, cat, channels, true)?;
                let pooled = ctx.tape.reduce_max(emb, n)?;
                embedded = Some(ctx.tape.gather(pooled, &broadcast_rows(b, n))?);
            }
            other => return Err(NetworkError::Spec(format!("DGCNN cannot use a {} layer", other.kind()))),
        }
    }
    let mut parts = vec![embedded.expect("validated")];
    parts.extend(edges);
    Ok(ctx.tape.concat(&parts, 1)?)
}

/// Dynamic-graph edge convolution: kNN in the space of `x` itself.
pub(crate) fn edge_conv(ctx: &mut Ctx<'_>, prefix: &str, x: Var, b: usize, n: usize, k: usize, channels: &[usize]) -> Result<Var> {
    let dim = ctx.tape.shape(x)[1];
    let data = ctx.tape.value(x).data().to_vec();
    let mut centers = Vec::with_capacity(b * n * k);
    let mut neighbors = Vec::with_capacity(b * n * k);
    for blk in 0..b {
        let rows = &data[blk * n * dim..(blk + 1) * n * dim];
        let nbrs = knn_rows(rows, rows, dim, k)?;
        ctx.tape.record_branch(&nbrs);
        neighbors.extend(nbrs.iter().map(|&j| blk * n + j));
        centers.extend((0..n).flat_map(|i| std::iter::repeat_n(blk * n + i, k)));
    }
    let xi = ctx.tape.gather(x, &centers)?;
    let xj = ctx.tape.gather(x, &neighbors)?;
    let diff = ctx.tape.sub(xj, xi)?;
    let edge = ctx.tape.concat(&[xi, diff], 1)?;
    let h = ctx.mlp(prefix, edge, channels, true)?;
    Ok(ctx.tape.reduce_max(h, k)?)
}

/// Representatives of a level: all points in order when `p` equals the
/// level size, otherwise farthest point sampling.
fn representatives(pos: &[Point3], p: usize, spec: &ModelSpec, idx: usize) -> Result<Vec<usize>> {
    if p == pos.len() {
        return Ok((0..p).collect());
    }
    let start = match spec.fps_seed {
        None => 0,
        Some(s) => (derive_seed(s, idx as u64) % pos.len() as u64) as usize,
    };
    farthest_point_sampling(pos, p, start)
}

/// Neighbor offsets `pos[j] - rep` for every group entry, stacked `[Σ, 3]`.
fn local_coords(base: &Level, reps: &[Vec<Point3>], groups: &[Vec<Vec<usize>>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (b, (r, g)) in reps.iter().zip(groups).enumerate() {
        let pos = &base.pos[b];
        for (c, members) in r.iter().zip(g) {
            for &j in members {
                out.extend((0..3).map(|k| pos[j][k] - c[k]));
            }
        }
    }
    out
}

fn pick(level: &Level, reps: &[Vec<usize>]) -> Vec<Vec<Point3>> {
    reps.iter().zip(&level.pos).map(|(r, pos)| r.iter().map(|&i| pos[i]).collect()).collect()
}

/// Group input: recentered coordinates, concatenated with gathered features.
fn group_input(ctx: &mut Ctx<'_>, base: &Level, reps: &[Vec<Point3>], groups: &[Vec<Vec<usize>>]) -> Result<Var> {
    let local = local_coords(base, reps, groups);
    let rows = local.len() / 3;
    let local = ctx.constant(vec![rows, 3], local)?;
    match base.feat {
        None => Ok(local),
        Some(f) => {
            let g = ctx.tape.gather(f, &offset_rows(groups, base.count()))?;
            Ok(ctx.tape.concat(&[local, g], 1)?)
        }
    }
}

/// X-Conv of `groups` (K members of `base` per representative).
#[allow(clippy::too_many_arguments)]
pub(crate) fn x_conv(
    ctx: &mut Ctx<'_>,
    prefix: &str,
    base: &Level,
    reps: &[Vec<Point3>],
    groups: &[Vec<Vec<usize>>],
    k: usize,
    lift: usize,
    channels: usize,
) -> Result<Var> {
    let local = local_coords(base, reps, groups);
    let rows = local.len() / 3;
    let p = rows / k;
    let local_var = ctx.constant(vec![rows, 3], local.clone())?;
    let l0 = ctx.dense(&format!("{prefix}.lift0"), local_var, lift, true, true)?;
    let lifted = ctx.dense(&format!("{prefix}.lift1"), l0, lift, true, true)?;
    let fstar = match base.feat {
        Some(f) => {
            let g = ctx.tape.gather(f, &offset_rows(groups, base.count()))?;
            ctx.tape.concat(&[lifted, g], 1)?
        }
        None => lifted,
    };
    let width = ctx.tape.shape(fstar)[1];
    let fstar = ctx.tape.reshape(fstar, &[p, k, width])?;
    let flat = ctx.constant(vec![p, 3 * k], local)?;
    let x0 = ctx.dense(&format!("{prefix}.xm0"), flat, k * k, false, true)?;
    let x1 = ctx.dense(&format!("{prefix}.xm1"), x0, k * k, false, false)?;
    let xm = ctx.tape.reshape(x1, &[p, k, k])?;
    let mixed = ctx.tape.batched_matmul(xm, fstar)?;
    let mixed = ctx.tape.reshape(mixed, &[p, k * width])?;
    ctx.dense(&format!("{prefix}.conv"), mixed, channels, true, true)
}

/// Shared point MLP, max over consecutive runs of `k` rows (one shell or
/// bin), then a dense layer across the `d` pooled rows of each representative.
pub(crate) fn binned_conv(ctx: &mut Ctx<'_>, prefix: &str, x: Var, k: usize, d: usize, channels: usize) -> Result<Var> {
    let h = ctx.dense(&format!("{prefix}.point"), x, channels, true, true)?;
    let pooled = ctx.tape.reduce_max(h, k)?;
    let rows = ctx.tape.shape(pooled)[0] / d;
    let seq = ctx.tape.reshape(pooled, &[rows, d * channels])?;
    ctx.dense(&format!("{prefix}.conv"), seq, channels, true, true)
}

fn encoder_decoder(ctx: &mut Ctx<'_>, spec: &ModelSpec, input: Level) -> Result<Var> {
    let b = input.pos.len();
    let mut levels = vec![input];
    if spec.architecture == Architecture::RIConv {
        levels[0].feat = None;
    }
    let mut current = 0;
    for (idx, layer) in spec.layers[..spec.layers.len() - 1].iter().enumerate() {
        let prefix = format!("l{idx}");
        match *layer {
            LayerRecord::SetAbstraction { points, radius, group, ref channels } => {
                let level = &levels[current];
                let reps = level.pos.iter().map(|p| representatives(p, points, spec, idx)).collect::<Result<Vec<_>>>()?;
                let seed = derive_seed(BALL_SEED, idx as u64);
                let groups = level.pos.iter().zip(&reps).map(|(p, r)| ball_query(p, r, radius, group, seed)).collect::<Result<Vec<_>>>()?;
                let pos = pick(level, &reps);
                let x = group_input(ctx, level, &pos, &groups)?;
                let h = ctx.mlp(&prefix, x, channels, true)?;
                let pooled = ctx.tape.reduce_max(h, group)?;
                levels.push(Level { pos, feat: Some(pooled) });
                current = levels.len() - 1;
            }
            LayerRecord::XConv { points, k, dilation, lift, channels } => {
                let level = &levels[current];
                let reps = level.pos.iter().map(|p| representatives(p, points, spec, idx)).collect::<Result<Vec<_>>>()?;
                let pos = pick(level, &reps);
                let groups = pos.iter().zip(&level.pos).map(|(q, base)| dilated_knn(q, base, k, dilation)).collect::<Result<Vec<_>>>()?;
                let out = x_conv(ctx, &prefix, level, &pos, &groups, k, lift, channels)?;
                levels.push(Level { pos, feat: Some(out) });
                current = levels.len() - 1;
            }
            LayerRecord::XDeconv { k, dilation, lift, channels } => {
                let target = current - 1;
                let (coarse, fine) = (&levels[current], &levels[target]);
                let groups = fine.pos.iter().zip(&coarse.pos).map(|(q, base)| dilated_knn(q, base, k, dilation)).collect::<Result<Vec<_>>>()?;
                let conv = x_conv(ctx, &prefix, coarse, &fine.pos, &groups, k, lift, channels)?;
                let fused = match levels[target].feat {
                    Some(skip) => {
                        let cat = ctx.tape.concat(&[conv, skip], 1)?;
                        ctx.dense(&format!("{prefix}.fuse"), cat, channels, true, true)?
                    }
                    None => conv,
                };
                levels[target].feat = Some(fused);
                current = target;
            }
            LayerRecord::ShellConv { points, k, shells, channels } => {
                let level = &levels[current];
                let reps = level.pos.iter().map(|p| representatives(p, points, spec, idx)).collect::<Result<Vec<_>>>()?;
                let pos = pick(level, &reps);
                let groups = pos
                    .iter()
                    .zip(&level.pos)
                    .map(|(q, base)| Ok(shell_groups(q, base, k, shells)?.into_iter().map(|g| g.concat()).collect()))
                    .collect::<Result<Vec<Vec<Vec<usize>>>>>()?;
                let x = group_input(ctx, level, &pos, &groups)?;
                let out = binned_conv(ctx, &prefix, x, k, shells, channels)?;
                levels.push(Level { pos, feat: Some(out) });
                current = levels.len() - 1;
            }
            LayerRecord::RiConv { points, k, bins, channels } => {
                let level = &levels[current];
                let reps = level.pos.iter().map(|p| representatives(p, points, spec, idx)).collect::<Result<Vec<_>>>()?;
                let pos = pick(level, &reps);
                let mut groups = pos.iter().zip(&level.pos).map(|(q, base)| knn(q, base, k)).collect::<Result<Vec<_>>>()?;
                let mut ri = Vec::with_capacity(b * points * k * 3);
                for (blk, g) in groups.iter_mut().enumerate() {
                    for (rep, members) in pos[blk].iter().zip(g.iter_mut()) {
                        let pts: Vec<Point3> = members.iter().map(|&j| level.pos[blk][j]).collect();
                        let order = ri_bin_order(&pts, *rep);
                        let feats = ri_features(&pts, *rep);
                        *members = order.iter().map(|&o| members[o]).collect();
                        ri.extend(order.iter().flat_map(|&o| feats[o]));
                    }
                }
                let rows = ri.len() / 3;
                let mut x = ctx.constant(vec![rows, 3], ri)?;
                if let Some(f) = level.feat {
                    let g = ctx.tape.gather(f, &offset_rows(&groups, level.count()))?;
                    x = ctx.tape.concat(&[x, g], 1)?;
                }
                let out = binned_conv(ctx, &prefix, x, k / bins, bins, channels)?;
                levels.push(Level { pos, feat: Some(out) });
                current = levels.len() - 1;
            }
            LayerRecord::FeaturePropagation { ref channels } => {
                let target = current - 1;
                let coarse_feat = levels[current].feat.expect("encoder output");
                let mut rows = Vec::new();
                let mut weights = Vec::new();
                let mut k = 0;
                for blk in 0..b {
                    let (r, w, kk) = interpolation_weights(&levels[target].pos[blk], &levels[current].pos[blk])?;
                    rows.extend(r.iter().map(|&i| blk * levels[current].count() + i));
                    weights.extend(w);
                    k = kk;
                }
                let interp = ctx.tape.weighted_gather(coarse_feat, &rows, &weights, k)?;
                let x = match levels[target].feat {
                    Some(skip) => ctx.tape.concat(&[interp, skip], 1)?,
                    None => interp,
                };
                let out = ctx.mlp(&prefix, x, channels, true)?;
                levels[target].feat = Some(out);
                current = target;
            }
            ref other => return Err(NetworkError::Spec(format!("{} cannot use a {} layer", spec.architecture, other.kind()))),
        }
    }
    let mut feat = levels[current].feat.expect("decoder output");
    if current != 0 {
        let identical = levels[current].pos == levels[0].pos;
        if !identical {
            let mut rows = Vec::new();
            let mut weights = Vec::new();
            let mut k = 0;
            for blk in 0..b {
                let (r, w, kk) = interpolation_weights(&levels[0].pos[blk], &levels[current].pos[blk])?;
                rows.extend(r.iter().map(|&i| blk * levels[current].count() + i));
                weights.extend(w);
                k = kk;
            }
            feat = ctx.tape.weighted_gather(feat, &rows, &weights, k)?;
        }
    }
    Ok(feat)
}
