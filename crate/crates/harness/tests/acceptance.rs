//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- <filter>` runs only the criteria whose
//! name contains one of the filters.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_autodiff::finite_diff::{check_gradient, Evaluation};
use rosepoint_autodiff::{NormMode, Tape, Tensor, Var};
use rosepoint_core::{compute_metrics, derive_seed, ClassScores, OrganLabel, PartLabel, Point3};
use rosepoint_harness::{
    evaluate, evaluate_blocks, run_matrix, train, train_blocks_until, ExperimentSpec, ExperimentTag, MatrixPlan,
    TrainConfig,
};
use rosepoint_networks::{
    build_model, farthest_point_sampling, layer_of, ri_features, Architecture, Checkpoint, ModelSpec, Preset, TrainMask,
};
use rosepoint_preprocess::{make_blocks, merge_predictions, partition, reassign_small, BlockSpec, SampledBlock};
use rosepoint_synthgen::{
    generate_dataset_with_density, generate_plant, mesh_area, sample_mesh, sample_mesh_traced, OrganMesh, PlantMesh,
    PlantParams, Split, SAMPLING_DENSITY,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration, detail: String) -> Check {
    let spent = start.elapsed();
    if spent <= budget {
        Ok(format!("{detail}; {:.1}s of {}s", spent.as_secs_f64(), budget.as_secs()))
    } else {
        Err(format!("{detail}; took {:.1}s, budget {}s", spent.as_secs_f64(), budget.as_secs()))
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

// ---------------------------------------------------------------- metrics

fn metrics_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for pair in 0..200 {
        let pred: Vec<PartLabel> = (0..1000).map(|_| PartLabel::ALL[rng.random_range(0..3)]).collect();
        let gt: Vec<PartLabel> = (0..1000).map(|_| PartLabel::ALL[rng.random_range(0..3)]).collect();
        let mut m = [[0u64; 3]; 3];
        for (p, g) in pred.iter().zip(&gt) {
            m[g.index()][p.index()] += 1;
        }
        let r = compute_metrics(&pred, &gt).map_err(err)?;
        let ratio = |a: u64, b: u64| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        let mut ious = [0.0; 3];
        for k in 0..3 {
            let tp = m[k][k];
            let fn_: u64 = (0..3).filter(|&j| j != k).map(|j| m[k][j]).sum();
            let fp: u64 = (0..3).filter(|&j| j != k).map(|j| m[j][k]).sum();
            ious[k] = ratio(tp, tp + fp + fn_);
            let c = &r.per_class[k];
            ensure(
                c.recall == ratio(tp, tp + fn_) && c.precision == ratio(tp, tp + fp) && c.iou == ious[k],
                || format!("pair {pair} class {k} differs"),
            )?;
        }
        let acc = ratio(m[0][0] + m[1][1] + m[2][2], 1000);
        ensure(r.acc == acc && r.miou == (ious[0] + ious[1] + ious[2]) / 3.0, || format!("pair {pair} acc/miou differ"))?;
    }
    within(start, Duration::from_secs(5), "200 pairs of 1000 labels match exactly".into())
}

// ---------------------------------------------------------- preprocessing

fn preprocessing_conservation() -> Check {
    let start = Instant::now();
    let spec = BlockSpec::default();
    let (mut blocks_total, mut points_total) = (0, 0);
    for i in 0..20u64 {
        let mesh = generate_plant(&PlantParams::default(), derive_seed(77, i)).map_err(err)?;
        let cloud = sample_mesh(&mesh, SAMPLING_DENSITY, derive_seed(78, i)).map_err(err)?;
        points_total += cloud.len();
        for offset in [0.0, 5.0] {
            let s = spec.with_offset(offset);
            let raw = reassign_small(partition(&cloud, &s).map_err(err)?, &s);
            let mut idx: Vec<usize> = raw.iter().flat_map(|b| b.point_indices.iter().copied()).collect();
            idx.sort_unstable();
            ensure(idx == (0..cloud.len()).collect::<Vec<_>>(), || format!("cloud {i} offset {offset}: index multiset changed"))?;
        }
        let blocks = make_blocks(&cloud, &spec, &[0.0, 5.0], i).map_err(err)?;
        blocks_total += blocks.len();
        for b in &blocks {
            let labels = b.labels.as_ref().map_or(0, Vec::len);
            ensure(b.positions.len() == spec.n_points && b.source_indices.len() == spec.n_points && labels == spec.n_points, || {
                format!("cloud {i}: block of {} rows", b.positions.len())
            })?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let scored: Vec<(SampledBlock, ClassScores)> = blocks
            .into_iter()
            .map(|b| {
                let rows = (0..b.len())
                    .map(|_| {
                        let r: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
                        let sum: f64 = r.iter().sum();
                        r.map(|v| v / sum)
                    })
                    .collect();
                (b, ClassScores::new(rows).unwrap())
            })
            .collect();
        let merged = merge_predictions(cloud.len(), &scored).map_err(err)?;
        ensure(merged.len() == cloud.len(), || format!("cloud {i}: {} of {} points labeled", merged.len(), cloud.len()))?;
    }
    within(start, Duration::from_secs(60), format!("20 plants, {points_total} points, {blocks_total} blocks conserved"))
}

// -------------------------------------------------------------------- FPS

fn d2(a: Point3, b: Point3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn greedy_fps(pts: &[Point3], p: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < p {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..pts.len() {
            let gap = chosen.iter().map(|&c| d2(pts[i], pts[c])).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(b, _)| gap > b) {
                best = Some((gap, i));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

fn fps_equivalence() -> Check {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=64);
        let pts: Vec<Point3> = if seed % 4 == 0 {
            (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0..4) as f64)).collect()
        } else {
            (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-10.0..10.0))).collect()
        };
        let p = rng.random_range(1..=n);
        let got = farthest_point_sampling(&pts, p, 0).map_err(err)?;
        ensure(got == greedy_fps(&pts, p, 0), || format!("instance {seed} differs"))?;
    }
    Ok("100 instances match index for index".into())
}

// -------------------------------------------------------------- gradients

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

fn primitive_loss(build: &Build, inputs: &[Tensor]) -> (Tape, Vec<Var>, Var) {
    let mut tape = Tape::new();
    tape.track_branches();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad(true))).collect();
    let out = build(&mut tape, &vars);
    let loss = if tape.value(out).numel() == 1 {
        out
    } else {
        let shape = tape.shape(out).to_vec();
        let w = tape.constant(random_tensor(&mut ChaCha8Rng::seed_from_u64(99), &shape));
        let prod = tape.mul(out, w).unwrap();
        tape.sum(prod).unwrap()
    };
    (tape, vars, loss)
}

fn primitive_error(build: &Build, inputs: &[Tensor]) -> f64 {
    let (tape, vars, loss) = primitive_loss(build, inputs);
    let mut grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.take(vars[k]).unwrap().into_data();
        let indices: Vec<usize> = (0..input.numel()).collect();
        let report = check_gradient(input.data(), &analytic, &indices, STEP, FLOOR, |x: &[f64]| {
            let mut probe = inputs.to_vec();
            probe[k] = Tensor::new(input.shape().to_vec(), x.to_vec()).unwrap();
            let (tape, _, loss) = primitive_loss(build, &probe);
            Evaluation { value: tape.value(loss).item(), signature: tape.branch_signature() }
        });
        worst = worst.max(report.max_relative_error);
    }
    worst
}

fn primitive_cases() -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let x = random_tensor(&mut rng, &[4, 5]);
    let y = random_tensor(&mut rng, &[4, 5]);
    let w = random_tensor(&mut rng, &[5, 3]);
    let c = random_tensor(&mut rng, &[5]);
    let c2 = random_tensor(&mut rng, &[5]);
    let a3 = random_tensor(&mut rng, &[2, 3, 4]);
    let b3 = random_tensor(&mut rng, &[2, 4, 2]);
    let logits = random_tensor(&mut rng, &[4, 3]);
    vec![
        ("matmul", vec![x.clone(), w], Box::new(|t, v| t.matmul(v[0], v[1]).unwrap())),
        ("add", vec![x.clone(), y.clone()], Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", vec![x.clone(), y.clone()], Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", vec![x.clone(), y.clone()], Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("add_bias", vec![x.clone(), c.clone()], Box::new(|t, v| t.add_bias(v[0], v[1]).unwrap())),
        ("scale", vec![x.clone()], Box::new(|t, v| t.scale(v[0], -2.5).unwrap())),
        ("concat", vec![x.clone(), y.clone()], Box::new(|t, v| t.concat(&[v[0], v[1]], 1).unwrap())),
        ("gather", vec![x.clone()], Box::new(|t, v| t.gather(v[0], &[3, 0, 0, 2, 3, 1]).unwrap())),
        (
            "weighted_gather",
            vec![x.clone()],
            Box::new(|t, v| t.weighted_gather(v[0], &[0, 1, 3, 2, 2, 0], &[0.2, 0.5, 0.3, 0.6, 0.1, 0.3], 3).unwrap()),
        ),
        ("reduce_max", vec![x.clone()], Box::new(|t, v| t.reduce_max(v[0], 2).unwrap())),
        ("relu", vec![x.clone()], Box::new(|t, v| t.relu(v[0]).unwrap())),
        (
            "batch_norm",
            vec![x.clone(), c, c2],
            Box::new(|t, v| t.batch_norm(v[0], v[1], v[2], NormMode::Train, None).unwrap().0),
        ),
        ("softmax", vec![x.clone()], Box::new(|t, v| t.softmax(v[0]).unwrap())),
        ("reshape", vec![x.clone()], Box::new(|t, v| t.reshape(v[0], &[2, 10]).unwrap())),
        ("batched_matmul", vec![a3, b3], Box::new(|t, v| t.batched_matmul(v[0], v[1]).unwrap())),
        ("sum", vec![x.clone()], Box::new(|t, v| t.sum(v[0]).unwrap())),
        ("mean", vec![x], Box::new(|t, v| t.mean(v[0]).unwrap())),
        ("softmax_cross_entropy", vec![logits], Box::new(|t, v| t.softmax_cross_entropy(v[0], &[0, 2, 1, 1]).unwrap())),
    ]
}

fn model_loss(ckpt: &Checkpoint, blocks: &[Vec<Point3>], labels: &[usize]) -> Evaluation {
    let mut tape = Tape::new();
    tape.track_branches();
    let (out, _) = ckpt.forward_tape(&mut tape, blocks, NormMode::Train, &TrainMask::All).unwrap();
    let loss = tape.softmax_cross_entropy(out.logits, labels).unwrap();
    Evaluation { value: tape.value(loss).item(), signature: tape.branch_signature() }
}

fn model_error(arch: Architecture) -> std::result::Result<f64, String> {
    let spec = ModelSpec::preset(arch, Preset::Toy);
    let ckpt = build_model(&spec, 5).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let blocks: Vec<Vec<Point3>> =
        (0..2).map(|_| (0..spec.n_points).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect()).collect();
    let labels: Vec<usize> = (0..2 * spec.n_points).map(|_| rng.random_range(0..3)).collect();
    let step = ckpt.loss_and_gradients(&blocks, &labels, &TrainMask::All).map_err(err)?;
    let names: Vec<String> = ckpt.weights.keys().filter(|k| TrainMask::All.allows(k)).cloned().collect();
    let (mut x, mut analytic) = (Vec::new(), Vec::new());
    for name in &names {
        let w = &ckpt.weights[name];
        x.extend_from_slice(w.data());
        match step.gradients.get(name) {
            Some(g) => analytic.extend_from_slice(g.data()),
            None => analytic.extend(std::iter::repeat_n(0.0, w.numel())),
        }
    }
    let report = check_gradient(&x, &analytic, &(0..x.len()).collect::<Vec<_>>(), STEP, FLOOR, |p: &[f64]| {
        let mut probe = ckpt.clone();
        let mut at = 0;
        for name in &names {
            let t = probe.weights.get_mut(name).unwrap();
            let n = t.numel();
            t.data_mut().copy_from_slice(&p[at..at + n]);
            at += n;
        }
        model_loss(&probe, &blocks, &labels)
    });
    ensure(report.kinks * 20 <= x.len(), || format!("{arch}: {} of {} coordinates on kinks", report.kinks, x.len()))?;
    Ok(report.max_relative_error)
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    for (name, inputs, build) in primitive_cases() {
        let e = primitive_error(&build, &inputs);
        ensure(e < GRAD_TOL, || format!("{name}: relative error {e:.2e}"))?;
        if e > worst.0 {
            worst = (e, name.to_string());
        }
    }
    for arch in Architecture::ALL {
        let e = model_error(arch)?;
        ensure(e < GRAD_TOL, || format!("{arch}: relative error {e:.2e}"))?;
        if e > worst.0 {
            worst = (e, arch.to_string());
        }
    }
    within(start, Duration::from_secs(600), format!("max relative error {:.2e} ({})", worst.0, worst.1))
}

// --------------------------------------------------------------- symmetry

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let [w, x, y, z] = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>();
        if n > 1e-3 && n <= 1.0 {
            break q.map(|v| v / n.sqrt());
        }
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rigid(r: &[[f64; 3]; 3], t: Point3, p: Point3) -> Point3 {
    std::array::from_fn(|i| (0..3).map(|j| r[i][j] * p[j]).sum::<f64>() + t[i])
}

fn random_block(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect()
}

/// Moves batch-norm statistics and affine terms off their initial values.
fn roughen(ckpt: &mut Checkpoint, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in ckpt.weights.iter_mut() {
        let (lo, hi) = if name.ends_with(".var") || name.ends_with(".gamma") { (0.5, 1.5) } else { (-0.2, 0.2) };
        if [".var", ".gamma", ".mean", ".beta"].iter().any(|s| name.ends_with(s)) {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(lo..hi));
        }
    }
}

fn symmetry_suite() -> Check {
    let spec = ModelSpec::preset(Architecture::PointNet, Preset::Desk);
    let mut ckpt = build_model(&spec, 12).map_err(err)?;
    roughen(&mut ckpt, 1);
    let pts = random_block(spec.n_points, 13);
    let base = ckpt.scores(std::slice::from_ref(&pts)).map_err(err)?.remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut perm_worst: f64 = 0.0;
    for _ in 0..50 {
        let mut perm: Vec<usize> = (0..spec.n_points).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
        let s = ckpt.scores(&[shuffled]).map_err(err)?.remove(0);
        for (row, &i) in s.rows().iter().zip(&perm) {
            for k in 0..3 {
                perm_worst = perm_worst.max((row[k] - base.rows()[i][k]).abs());
            }
        }
    }
    ensure(perm_worst <= 1e-9, || format!("PointNet permutation error {perm_worst:.2e}"))?;

    let mut feat_worst: f64 = 0.0;
    for trial in 0..100u64 {
        let group = random_block(16, 1000 + trial);
        let r = random_rotation(&mut rng);
        let t: Point3 = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
        let before = ri_features(&group, group[0]);
        let moved: Vec<Point3> = group.iter().map(|&p| rigid(&r, t, p)).collect();
        let after = ri_features(&moved, moved[0]);
        for (a, b) in before.iter().zip(&after) {
            for k in 0..3 {
                feat_worst = feat_worst.max((a[k] - b[k]).abs());
            }
        }
    }
    ensure(feat_worst <= 1e-6, || format!("ri_features error {feat_worst:.2e}"))?;

    let spec = ModelSpec::preset(Architecture::RIConv, Preset::Desk);
    let mut ckpt = build_model(&spec, 30).map_err(err)?;
    roughen(&mut ckpt, 2);
    let pts = random_block(spec.n_points, 31);
    let base = ckpt.scores(std::slice::from_ref(&pts)).map_err(err)?.remove(0);
    let mut score_worst: f64 = 0.0;
    for _ in 0..100 {
        let r = random_rotation(&mut rng);
        let t: Point3 = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let moved: Vec<Point3> = pts.iter().map(|&p| rigid(&r, t, p)).collect();
        let s = ckpt.scores(&[moved]).map_err(err)?.remove(0);
        for (a, b) in s.rows().iter().zip(base.rows()) {
            for k in 0..3 {
                score_worst = score_worst.max((a[k] - b[k]).abs());
            }
        }
    }
    ensure(score_worst <= 1e-5, || format!("RIConv score error {score_worst:.2e}"))?;
    Ok(format!(
        "permutation {perm_worst:.1e} (tol 1e-9), ri_features {feat_worst:.1e} (tol 1e-6), RIConv scores {score_worst:.1e} (tol 1e-5)"
    ))
}

// ---------------------------------------------------------------- overfit

const OVERFIT_EPOCHS: usize = 200;
const OVERFIT_TARGET: f64 = 0.95;

/// Two desk-size blocks from one synthetic plant, preferring blocks that
/// contain all three classes.
fn overfit_blocks(n_points: usize) -> std::result::Result<Vec<SampledBlock>, String> {
    let mesh = generate_plant(&PlantParams::default(), 4242).map_err(err)?;
    let cloud = sample_mesh(&mesh, 6.0, 4243).map_err(err)?;
    let spec = BlockSpec { n_points, ..BlockSpec::default() };
    let mut blocks = make_blocks(&cloud, &spec, &[0.0], 5).map_err(err)?;
    let classes = |b: &SampledBlock| b.labels.as_ref().unwrap().iter().collect::<BTreeSet<_>>().len();
    blocks.sort_by_key(|b| std::cmp::Reverse(classes(b)));
    blocks.truncate(2);
    ensure(blocks.len() == 2, || "plant produced fewer than two blocks".into())?;
    Ok(blocks)
}

fn overfit_check() -> Check {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for arch in Architecture::ALL {
        let t = Instant::now();
        let spec = ModelSpec::preset(arch, Preset::Desk);
        let blocks = overfit_blocks(spec.n_points)?;
        let mut ckpt = build_model(&spec, 3).map_err(err)?;
        let mut reached = None;
        let mut last_acc = 0.0;
        train_blocks_until(&mut ckpt, &blocks, &[], &TrainConfig::preset(arch), OVERFIT_EPOCHS, &TrainMask::All, 9, |c, e| {
            if e.epoch % 5 == 4 || e.epoch + 1 == OVERFIT_EPOCHS {
                last_acc = evaluate_blocks(c, &blocks)?.1;
                if last_acc >= OVERFIT_TARGET {
                    reached = Some(e.epoch + 1);
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .map_err(err)?;
        match reached {
            Some(ep) => lines.push(format!("{arch} {:.3} at epoch {ep} ({:.0}s)", last_acc, t.elapsed().as_secs_f64())),
            None => failures.push(format!("{arch} only {last_acc:.3} after {OVERFIT_EPOCHS} epochs")),
        }
    }
    if !failures.is_empty() {
        return Err(format!("{}; passed: {}", failures.join(", "), lines.join(", ")));
    }
    within(start, Duration::from_secs(20 * 60), lines.join(", "))
}

// ------------------------------------------------------------------ trend

const TREND_DENSITY: f64 = 2.5;
const TREND_SEEDS: [u64; 3] = [0, 1, 2];
const TREND_MARGIN: f64 = 0.05;
const TREND_FLOOR: f64 = 0.85;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct SyntheticSet {
    _dir: tempfile::TempDir,
    train: Vec<PathBuf>,
    validation: Vec<PathBuf>,
}

fn synthetic_set(density: f64, seed: u64) -> std::result::Result<SyntheticSet, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let m = generate_dataset_with_density(12, &PlantParams::default(), seed, density, dir.path()).map_err(err)?;
    let train = m.files(Split::Train).map(|f| dir.path().join(f)).collect();
    let validation = m.files(Split::Validation).map(|f| dir.path().join(f)).collect();
    Ok(SyntheticSet { _dir: dir, train, validation })
}

fn desk_trend() -> Check {
    let start = Instant::now();
    let data = synthetic_set(TREND_DENSITY, 2024)?;
    ensure(data.train.len() == 10 && data.validation.len() == 2, || "expected a 10/2 split".into())?;
    let mut accs = [Vec::new(), Vec::new()];
    for seed in TREND_SEEDS {
        for (slot, arch) in [Architecture::PointNet, Architecture::PointNetPP].into_iter().enumerate() {
            let model = ModelSpec::preset(arch, Preset::Desk);
            let mut spec = ExperimentSpec::new(ExperimentTag::S, data.train.clone());
            spec.epochs = rosepoint_harness::DESK_EPOCHS;
            spec.seed = seed;
            spec.block = BlockSpec { n_points: model.n_points, ..BlockSpec::default() };
            let (ckpt, _) = train(&spec, &model, &TrainConfig::preset(arch)).map_err(err)?;
            let acc = evaluate(&ckpt, &data.validation, &spec.block, seed).map_err(err)?.macro_report.acc;
            println!("    trend seed {seed} {arch}: validation Acc {acc:.4} ({:.0}s elapsed)", start.elapsed().as_secs_f64());
            accs[slot].push(acc);
        }
    }
    let (pn, pp) = (median(accs[0].clone()), median(accs[1].clone()));
    let detail = format!("median Acc PointNet {:.2}%, PointNet++ {:.2}% (reference 81.82 vs 98.50)", 100.0 * pn, 100.0 * pp);
    ensure(pp >= pn + TREND_MARGIN, || format!("{detail}; gap below {} points", 100.0 * TREND_MARGIN))?;
    ensure(pp >= TREND_FLOOR, || format!("{detail}; PointNet++ below {}%", 100.0 * TREND_FLOOR))?;
    within(start, Duration::from_secs(2 * 3600), detail)
}

// --------------------------------------------------------------- transfer

const REFERENCE_GAIN: f64 = 4.66;

fn transfer_pipeline() -> Check {
    let start = Instant::now();
    let data = synthetic_set(TREND_DENSITY, 77)?;
    let out = tempfile::tempdir().map_err(err)?;
    let arch = Architecture::PointNetPP;
    let plan = MatrixPlan {
        architectures: vec![arch.name().to_string()],
        preset: "desk".into(),
        experiments: vec![ExperimentTag::I, ExperimentTag::SI],
        train_sets: [(ExperimentTag::S, data.train.clone()), (ExperimentTag::I, vec![data.validation[0].clone()])].into(),
        test_clouds: vec![data.validation[1].clone()],
        epochs: 10,
        finetune_epochs: Some(15),
        val_fraction: 0.2,
        finetune_mask: None,
        seed: 5,
        block: BlockSpec::default(),
    };
    let outcome = run_matrix(&plan, out.path()).map_err(err)?;
    for c in &outcome.cells {
        ensure(c.error.is_none(), || format!("{} {} failed: {:?}", c.architecture, c.tag, c.error))?;
    }
    let pre = Checkpoint::load(out.path().join("pointnetpp_S.ckpt")).map_err(err)?;
    let post = Checkpoint::load(out.path().join("pointnetpp_S_I.ckpt")).map_err(err)?;
    let tuned: BTreeSet<usize> = pre.spec.default_finetune_layers().into_iter().collect();
    let (mut frozen, mut moved) = (0, 0);
    for (name, w) in &pre.weights {
        let layer = layer_of(name).ok_or_else(|| format!("unnamed layer {name}"))?;
        if tuned.contains(&layer) {
            moved += usize::from(post.weights[name] != *w);
        } else {
            frozen += 1;
            ensure(post.weights[name] == *w, || format!("frozen tensor {name} changed"))?;
        }
    }
    ensure(moved > 0, || "fine-tuning changed nothing".into())?;
    let cell = |tag| outcome.cells.iter().find(|c| c.tag == tag).and_then(|c| c.record.clone()?.macro_report);
    let (base, transfer) = (cell(ExperimentTag::I).ok_or("no I report")?, cell(ExperimentTag::SI).ok_or("no S+I report")?);
    let csv = std::fs::read_to_string(out.path().join("comparison.csv")).map_err(err)?;
    let lookup = |class: &str, row: &str| -> std::result::Result<f64, String> {
        let line = csv.lines().find(|l| l.starts_with(&format!("{class},{row},"))).ok_or(format!("no {class}/{row} row"))?;
        line.split(',').nth(2).unwrap().parse::<f64>().map_err(err)
    };
    for (k, class) in ["Flower", "Leaf", "Stem"].into_iter().enumerate() {
        let gain = lookup(class, "Gain")?;
        ensure(gain == transfer.per_class[k].iou - base.per_class[k].iou, || format!("{class} gain {gain} is not the cell difference"))?;
        ensure(gain == lookup(class, "S+I")? - lookup(class, "I")?, || format!("{class} gain differs from the table cells"))?;
    }
    let miou_gain = lookup("MIoU", "Gain")?;
    ensure(miou_gain == transfer.miou - base.miou, || "MIoU gain is not the cell difference".into())?;
    within(
        start,
        Duration::from_secs(30 * 60),
        format!(
            "{frozen} frozen tensors bit-identical, {moved} tuned tensors moved, MIoU gain {:+.2} points (reference {REFERENCE_GAIN:+.2})",
            100.0 * miou_gain
        ),
    )
}

// --------------------------------------------------------------- sampling

fn sampling_homogeneity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    while triangles.len() < 100 {
        let p: Vec<Point3> = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        let u: Point3 = std::array::from_fn(|i| p[1][i] - p[0][i]);
        let v: Point3 = std::array::from_fn(|i| p[2][i] - p[0][i]);
        let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let area = 0.5 * cross.iter().map(|c| c * c).sum::<f64>().sqrt();
        if area < 0.5 {
            continue;
        }
        let base = vertices.len();
        vertices.extend(p);
        triangles.push([base, base + 1, base + 2]);
    }
    let organ = OrganMesh::new(vertices, triangles, OrganLabel::Leaflet).map_err(err)?;
    let areas: Vec<f64> = (0..100)
        .map(|t| {
            let [a, b, c] = organ.triangle(t);
            let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
            let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
            let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
            0.5 * (dot(&u, &u) * dot(&v, &v) - dot(&u, &v).powi(2)).sqrt()
        })
        .collect();
    let mesh = PlantMesh { organs: vec![organ], seed: 0 };
    let total: f64 = areas.iter().sum();
    let n = 40_000;
    let density = n as f64 / mesh_area(&mesh);
    let (cloud, sources) = sample_mesh_traced(&mesh, density, 7).map_err(err)?;
    ensure(cloud.len() == n, || format!("{} samples, expected {n}", cloud.len()))?;
    ensure(cloud.labels().is_some_and(|l| l.iter().all(|&p| p == PartLabel::Leaf)), || "labels do not follow the organ".into())?;
    let mut counts = vec![0usize; 100];
    for s in &sources {
        counts[s.triangle] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&areas)
        .map(|(&c, a)| {
            let e = n as f64 * a / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(99.0).map_err(err)?.cdf(stat);
    ensure(p >= 0.001, || format!("chi-square {stat:.1}, p {p:.2e}"))?;
    Ok(format!("{n} samples exact, chi-square {stat:.1} on 99 dof, p {p:.3}"))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Check); 9] = [
        ("metrics oracle", metrics_oracle),
        ("preprocessing conservation", preprocessing_conservation),
        ("fps equivalence", fps_equivalence),
        ("gradient suite", gradient_suite),
        ("symmetry suite", symmetry_suite),
        ("overfit check", overfit_check),
        ("desk trend", desk_trend),
        ("transfer pipeline", transfer_pipeline),
        ("sampling homogeneity", sampling_homogeneity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
