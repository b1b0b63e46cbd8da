//! Checkpoints: initialization, inference, gradients and persistence.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rosepoint_autodiff::{read_container, write_container, BatchStats, Container, NamedTensors, NormMode, Tape};
use rosepoint_core::{ClassScores, Point3};
use rosepoint_preprocess::SampledBlock;
use serde::{Deserialize, Serialize};

use crate::forward::{run, Ctx, ForwardOutput};
use crate::spec::ModelSpec;
use crate::{NetworkError, Result};

/// Momentum of the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Experiment tag such as `I`, `S` or `S+II`; empty for fresh models.
    pub tag: String,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub weights: NamedTensors,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    provenance: Provenance,
    spec: ModelSpec,
}

/// Layer record index a weight belongs to (`l{idx}.…`).
pub fn layer_of(name: &str) -> Option<usize> {
    name.strip_prefix('l')?.split('.').next()?.parse().ok()
}

/// Running statistics are buffers, not trainable parameters.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".mean") || name.ends_with(".var")
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainMask {
    All,
    Layers(BTreeSet<usize>),
    Names(BTreeSet<String>),
}

impl TrainMask {
    pub fn allows(&self, name: &str) -> bool {
        if is_buffer(name) {
            return false;
        }
        match self {
            TrainMask::All => true,
            TrainMask::Layers(set) => layer_of(name).is_some_and(|l| set.contains(&l)),
            TrainMask::Names(set) => set.contains(name),
        }
    }
}

/// Random positions used to trace the network once during initialization.
fn probe_block(n: usize, seed: u64) -> Vec<Point3> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect()
}

/// Builds the architecture described by `spec` with seeded Kaiming-uniform
/// weights, zero biases and unit batch-norm scales.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Checkpoint> {
    spec.validate()?;
    let mut tape = Tape::new();
    let empty = NamedTensors::new();
    let mut ctx = Ctx::initializing(&mut tape, &empty, spec.batch_norm, seed);
    run(&mut ctx, spec, &[probe_block(spec.n_points, seed)])?;
    let weights = ctx.into_created();
    Ok(Checkpoint { spec: spec.clone(), weights, provenance: Provenance { tag: String::new(), epochs: 0, seed } })
}

/// Gradients and loss of one mini-batch.
pub struct StepResult {
    pub loss: f64,
    /// Points whose highest logit matches the label.
    pub correct: usize,
    pub gradients: NamedTensors,
    pub stats: Vec<(String, BatchStats)>,
}

impl Checkpoint {
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().filter(|(k, _)| !is_buffer(k)).map(|(_, t)| t.numel()).sum()
    }

    /// Records a forward pass of centered blocks on `tape`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        blocks: &[Vec<Point3>],
        mode: NormMode,
        mask: &TrainMask,
    ) -> Result<(ForwardOutput, std::collections::BTreeMap<String, rosepoint_autodiff::Var>)> {
        let allow = |n: &str| mask.allows(n);
        let mut ctx = Ctx::new(tape, &self.weights, &allow, mode, self.spec.batch_norm);
        let logits = run(&mut ctx, &self.spec, blocks)?;
        let bound = std::mem::take(&mut ctx.bound);
        Ok((ForwardOutput { logits, stats: ctx.into_stats() }, bound))
    }

    /// Softmax scores of one block in evaluation mode.
    pub fn forward(&self, block: &SampledBlock) -> Result<ClassScores> {
        Ok(self.forward_batch(std::slice::from_ref(block))?.pop().expect("one block"))
    }

    pub fn forward_batch(&self, blocks: &[SampledBlock]) -> Result<Vec<ClassScores>> {
        let centered: Vec<Vec<Point3>> = blocks.iter().map(SampledBlock::centered_positions).collect();
        self.scores(&centered)
    }

    /// Softmax scores of centered blocks in evaluation mode.
    pub fn scores(&self, blocks: &[Vec<Point3>]) -> Result<Vec<ClassScores>> {
        let mut tape = Tape::new();
        let (out, _) = self.forward_tape(&mut tape, blocks, NormMode::Eval, &TrainMask::Layers(BTreeSet::new()))?;
        let probs = tape.softmax(out.logits)?;
        let data = tape.value(probs).data();
        let n = self.spec.n_points;
        let c = self.spec.n_classes;
        if c != 3 {
            return Err(NetworkError::Spec(format!("class scores need 3 classes, spec has {c}")));
        }
        (0..blocks.len())
            .map(|b| {
                let rows = (0..n).map(|i| std::array::from_fn(|j| data[(b * n + i) * c + j])).collect();
                Ok(ClassScores::new(rows)?)
            })
            .collect()
    }

    /// Mean cross-entropy of a labeled batch and its gradients for every
    /// parameter allowed by `mask`. Batch norm uses batch statistics, except
    /// in layers whose scale is frozen, which keep their running statistics.
    pub fn loss_and_gradients(&self, blocks: &[Vec<Point3>], labels: &[usize], mask: &TrainMask) -> Result<StepResult> {
        let mut tape = Tape::new();
        let (out, bound) = self.forward_tape(&mut tape, blocks, NormMode::Train, mask)?;
        let loss_var = tape.softmax_cross_entropy(out.logits, labels)?;
        let loss = tape.value(loss_var).item();
        let logits = tape.value(out.logits);
        let correct = (0..labels.len())
            .filter(|&i| {
                let row = logits.row(i);
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                best == labels[i]
            })
            .count();
        let mut grads = tape.backward(loss_var)?;
        let mut gradients = NamedTensors::new();
        for (name, var) in bound {
            if mask.allows(&name) {
                if let Some(g) = grads.take(var) {
                    gradients.insert(name, g);
                }
            }
        }
        Ok(StepResult { loss, correct, gradients, stats: out.stats })
    }

    /// Exponential moving average of the running batch-norm statistics.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats)]) {
        for (prefix, s) in stats {
            for (suffix, values) in [("mean", &s.mean), ("var", &s.var)] {
                if let Some(t) = self.weights.get_mut(&format!("{prefix}.{suffix}")) {
                    for (r, v) in t.data_mut().iter_mut().zip(values.iter()) {
                        *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
                    }
                }
            }
        }
    }

    /// Mask of the layers retrained when fine-tuning.
    pub fn finetune_mask(&self) -> TrainMask {
        TrainMask::Layers(self.spec.default_finetune_layers().into_iter().collect())
    }

    /// Checks that the weights are exactly those `spec` produces.
    pub fn validate(&self) -> Result<()> {
        let fresh = build_model(&self.spec, 0)?;
        if fresh.weights.len() != self.weights.len() {
            return Err(NetworkError::Checkpoint(format!(
                "{} weights, spec expects {}",
                self.weights.len(),
                fresh.weights.len()
            )));
        }
        for (name, t) in &fresh.weights {
            match self.weights.get(name) {
                Some(w) if w.shape() == t.shape() => {}
                Some(w) => {
                    return Err(NetworkError::Checkpoint(format!("{name} has shape {:?}, expected {:?}", w.shape(), t.shape())))
                }
                None => return Err(NetworkError::Checkpoint(format!("missing weight {name}"))),
            }
        }
        Ok(())
    }

    pub fn write_to(&self, out: impl Write) -> Result<()> {
        let meta = Metadata { provenance: self.provenance.clone(), spec: self.spec.clone() };
        let metadata = toml::to_string(&meta).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        let container = Container { metadata, tensors: self.weights.clone() };
        Ok(write_container(&container, out)?)
    }

    pub fn read_from(input: impl std::io::Read) -> Result<Checkpoint> {
        let container = read_container(input)?;
        let meta: Metadata = toml::from_str(&container.metadata).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        meta.spec.validate()?;
        let ckpt = Checkpoint { spec: meta.spec, weights: container.tensors, provenance: meta.provenance };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| NetworkError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| NetworkError::Io { path: path.to_path_buf(), source })?;
        Checkpoint::read_from(BufReader::new(file))
    }

    /// Copy of `tensor` names and values, for optimizers.
    pub fn trainable(&self, mask: &TrainMask) -> NamedTensors {
        self.weights.iter().filter(|(k, _)| mask.allows(k)).map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    /// Writes back parameters updated outside the checkpoint.
    pub fn assign(&mut self, params: NamedTensors) -> Result<()> {
        for (name, t) in params {
            match self.weights.get_mut(&name) {
                Some(w) if w.shape() == t.shape() => *w = t,
                _ => return Err(NetworkError::Checkpoint(format!("cannot assign {name}"))),
            }
        }
        Ok(())
    }
}
