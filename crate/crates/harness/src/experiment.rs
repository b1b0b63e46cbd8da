//! Experiment tags, experiment specs and optimizer presets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rosepoint_autodiff::OptimizerState;
use rosepoint_networks::{Architecture, Checkpoint, ModelSpec, TrainMask};
use rosepoint_preprocess::BlockSpec;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// Training-set identifiers: real plants only (`I`, `II`, `III`), synthetic
/// only (`S`), or synthetic pretraining followed by real fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ExperimentTag {
    I,
    II,
    III,
    S,
    SI,
    SII,
    SIII,
}

impl ExperimentTag {
    pub const ALL: [ExperimentTag; 7] =
        [ExperimentTag::I, ExperimentTag::II, ExperimentTag::III, ExperimentTag::S, ExperimentTag::SI, ExperimentTag::SII, ExperimentTag::SIII];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentTag::I => "I",
            ExperimentTag::II => "II",
            ExperimentTag::III => "III",
            ExperimentTag::S => "S",
            ExperimentTag::SI => "S+I",
            ExperimentTag::SII => "S+II",
            ExperimentTag::SIII => "S+III",
        }
    }

    pub fn is_transfer(self) -> bool {
        matches!(self, ExperimentTag::SI | ExperimentTag::SII | ExperimentTag::SIII)
    }

    /// Real-data tag a transfer tag fine-tunes on.
    pub fn real_part(self) -> Option<ExperimentTag> {
        match self {
            ExperimentTag::SI => Some(ExperimentTag::I),
            ExperimentTag::SII => Some(ExperimentTag::II),
            ExperimentTag::SIII => Some(ExperimentTag::III),
            _ => None,
        }
    }

    /// Transfer tag built on a real-data tag.
    pub fn with_synthetic(self) -> Option<ExperimentTag> {
        match self {
            ExperimentTag::I => Some(ExperimentTag::SI),
            ExperimentTag::II => Some(ExperimentTag::SII),
            ExperimentTag::III => Some(ExperimentTag::SIII),
            _ => None,
        }
    }

    /// File-name friendly form (`S+II` → `S_II`).
    pub fn slug(self) -> String {
        self.name().replace('+', "_")
    }
}

impl fmt::Display for ExperimentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ExperimentTag {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "+");
        ExperimentTag::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment tag {s:?}")))
    }
}

impl TryFrom<String> for ExperimentTag {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ExperimentTag> for String {
    fn from(t: ExperimentTag) -> String {
        t.name().to_string()
    }
}

pub const DEFAULT_EPOCHS: usize = 250;
pub const DESK_EPOCHS: usize = 50;
pub const DEFAULT_VAL_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub tag: ExperimentTag,
    pub train_clouds: Vec<PathBuf>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub pretrain_checkpoint: Option<PathBuf>,
    /// Parameter-name patterns (`*` wildcard) updated during fine-tuning.
    /// Absent: the model's default head-and-last-two-layers mask. Empty:
    /// every parameter.
    #[serde(default)]
    pub finetune_mask: Option<Vec<String>>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub block: BlockSpec,
}

fn default_val_fraction() -> f64 {
    DEFAULT_VAL_FRACTION
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

impl ExperimentSpec {
    pub fn new(tag: ExperimentTag, train_clouds: Vec<PathBuf>) -> Self {
        ExperimentSpec {
            tag,
            train_clouds,
            val_fraction: DEFAULT_VAL_FRACTION,
            pretrain_checkpoint: None,
            finetune_mask: None,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            block: BlockSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag.is_transfer() && self.pretrain_checkpoint.is_none() {
            return Err(HarnessError::Config(format!("{} needs a pretrain_checkpoint", self.tag)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(HarnessError::Config(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction)));
        }
        if self.train_clouds.is_empty() {
            return Err(HarnessError::Config("train_clouds is empty".into()));
        }
        Ok(())
    }

    /// Parameters updated by this experiment.
    pub fn train_mask(&self, ckpt: &Checkpoint) -> TrainMask {
        if !self.tag.is_transfer() {
            return TrainMask::All;
        }
        match &self.finetune_mask {
            None => ckpt.finetune_mask(),
            Some(p) if p.is_empty() => TrainMask::All,
            Some(patterns) => resolve_mask(ckpt, patterns),
        }
    }
}

/// Concrete parameter names matched by `patterns`.
pub fn resolve_mask(ckpt: &Checkpoint, patterns: &[String]) -> TrainMask {
    let names: BTreeSet<String> = ckpt
        .weights
        .keys()
        .filter(|name| !rosepoint_networks::is_buffer(name) && patterns.iter().any(|p| glob_match(p, name)))
        .cloned()
        .collect();
    TrainMask::Names(names)
}

/// `*` matches any (possibly empty) run of characters.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}

/// Learning rate, batch size, staircase decay and weight decay of one architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub decay_step: u64,
    pub decay_rate: f64,
    pub weight_decay: Option<f64>,
}

impl OptimizerSettings {
    pub fn state(&self) -> Result<OptimizerState> {
        Ok(OptimizerState::new(self.learning_rate, self.batch_size, self.decay_step, self.decay_rate, self.weight_decay)?)
    }
}

/// Per-architecture optimizer presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig;

impl TrainConfig {
    pub fn preset(arch: Architecture) -> OptimizerSettings {
        let (learning_rate, batch_size, decay_step, decay_rate, weight_decay) = match arch {
            Architecture::PointNet => (0.001, 48, 30_000, 0.8, Some(0.005)),
            Architecture::PointNetPP => (0.005, 12, 200_000, 0.7, None),
            Architecture::DGCNN => (0.005, 12, 200_000, 0.5, None),
            Architecture::PointCNN => (0.005, 8, 10_000, 0.8, Some(1e-8)),
            Architecture::ShellNet => (0.005, 12, 5_000, 0.8, Some(1e-8)),
            Architecture::RIConv => (0.005, 12, 10_000, 0.8, Some(1e-6)),
        };
        OptimizerSettings { learning_rate, batch_size, decay_step, decay_rate, weight_decay }
    }
}

/// Checks that `ckpt` holds exactly the tensors `spec` needs, listing every
/// offending tensor otherwise.
pub fn check_compatible(ckpt: &Checkpoint, spec: &ModelSpec) -> Result<()> {
    let fresh = rosepoint_networks::build_model(spec, 0)?;
    let mut problems = Vec::new();
    for (name, t) in &fresh.weights {
        match ckpt.weights.get(name) {
            None => problems.push(format!("{name}: missing")),
            Some(w) if w.shape() != t.shape() => problems.push(format!("{name}: shape {:?}, expected {:?}", w.shape(), t.shape())),
            Some(_) => {}
        }
    }
    for name in ckpt.weights.keys().filter(|k| !fresh.weights.contains_key(*k)) {
        problems.push(format!("{name}: unexpected"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Compatibility(problems))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for t in ExperimentTag::ALL {
            assert_eq!(t.name().parse::<ExperimentTag>().unwrap(), t);
            assert_eq!(t.slug().parse::<ExperimentTag>().unwrap(), t);
        }
        assert!("IV".parse::<ExperimentTag>().is_err());
    }

    #[test]
    fn transfer_tags_need_a_checkpoint() {
        let mut spec = ExperimentSpec::new(ExperimentTag::SII, vec!["a.xyzl".into()]);
        assert!(spec.validate().is_err());
        spec.pretrain_checkpoint = Some("s.ckpt".into());
        spec.validate().unwrap();
        spec.val_fraction = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn globs() {
        assert!(glob_match("l9.*", "l9.0.w"));
        assert!(!glob_match("l9.*", "l19.0.w"));
        assert!(glob_match("*.gamma", "l3.1.gamma"));
        assert!(glob_match("l*.out.*", "l7.out.b"));
        assert!(glob_match("exact", "exact"));
        assert!(!glob_match("exact", "exactly"));
        assert!(!glob_match("a*a", "a"));
    }

    #[test]
    fn optimizer_presets() {
        let p = TrainConfig::preset(Architecture::PointNet);
        assert_eq!((p.learning_rate, p.batch_size, p.decay_step, p.decay_rate, p.weight_decay), (0.001, 48, 30_000, 0.8, Some(0.005)));
        let r = TrainConfig::preset(Architecture::RIConv);
        assert_eq!((r.learning_rate, r.batch_size, r.decay_step, r.decay_rate, r.weight_decay), (0.005, 12, 10_000, 0.8, Some(1e-6)));
    }
}
