//! Declarative model specifications.
//!
//! Channel widths of the modified networks are not recoverable, so every
//! architecture ships declared presets: `full` (block of 4096 points),
//! `desk` (512 points, roughly a quarter of the widths) and `toy` (32 points,
//! at most 8 channels) for gradient checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{NetworkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    PointNet,
    PointNetPP,
    DGCNN,
    PointCNN,
    ShellNet,
    RIConv,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::PointNet,
        Architecture::PointNetPP,
        Architecture::DGCNN,
        Architecture::PointCNN,
        Architecture::ShellNet,
        Architecture::RIConv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::PointNet => "PointNet",
            Architecture::PointNetPP => "PointNet++",
            Architecture::DGCNN => "DGCNN",
            Architecture::PointCNN => "PointCNN",
            Architecture::ShellNet => "ShellNet",
            Architecture::RIConv => "RIConv",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Architecture {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '+').collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "pointnet" => Architecture::PointNet,
            "pointnet++" | "pointnetpp" | "pointnet2" => Architecture::PointNetPP,
            "dgcnn" => Architecture::DGCNN,
            "pointcnn" => Architecture::PointCNN,
            "shellnet" => Architecture::ShellNet,
            "riconv" => Architecture::RIConv,
            _ => return Err(NetworkError::Spec(format!("unknown architecture {s:?}"))),
        })
    }
}

/// One entry of a layer plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerRecord {
    /// Shared per-point MLP.
    Mlp { channels: Vec<usize> },
    /// Fully connected stack on the pooled global feature.
    GlobalFc { channels: Vec<usize> },
    /// FPS to `points`, ball query (`radius`, `group`), shared MLP, max pool.
    SetAbstraction { points: usize, radius: f64, group: usize, channels: Vec<usize> },
    /// 3-NN inverse-distance interpolation to the mirrored level, skip concat, MLP.
    FeaturePropagation { channels: Vec<usize> },
    /// Dynamic-graph edge convolution with `k` neighbors.
    EdgeConv { k: usize, channels: Vec<usize> },
    /// X-transformed convolution onto `points` FPS representatives.
    XConv { points: usize, k: usize, dilation: usize, lift: usize, channels: usize },
    /// X-Conv from a coarse level back onto the mirrored finer level.
    XDeconv { k: usize, dilation: usize, lift: usize, channels: usize },
    /// `shells` concentric shells of `k` neighbors each.
    ShellConv { points: usize, k: usize, shells: usize, channels: usize },
    /// Rotation-invariant convolution with `bins` projection bins over `k` neighbors.
    RiConv { points: usize, k: usize, bins: usize, channels: usize },
    /// Per-point MLP followed by the class projection.
    Head { channels: Vec<usize> },
}

impl LayerRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerRecord::Mlp { .. } => "mlp",
            LayerRecord::GlobalFc { .. } => "global_fc",
            LayerRecord::SetAbstraction { .. } => "set_abstraction",
            LayerRecord::FeaturePropagation { .. } => "feature_propagation",
            LayerRecord::EdgeConv { .. } => "edge_conv",
            LayerRecord::XConv { .. } => "x_conv",
            LayerRecord::XDeconv { .. } => "x_deconv",
            LayerRecord::ShellConv { .. } => "shell_conv",
            LayerRecord::RiConv { .. } => "ri_conv",
            LayerRecord::Head { .. } => "head",
        }
    }

    /// Number of points this record samples, for encoder layers.
    fn points(&self) -> Option<usize> {
        match *self {
            LayerRecord::SetAbstraction { points, .. }
            | LayerRecord::XConv { points, .. }
            | LayerRecord::ShellConv { points, .. }
            | LayerRecord::RiConv { points, .. } => Some(points),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub n_points: usize,
    pub n_classes: usize,
    /// Batch normalization after every hidden per-point layer.
    #[serde(default = "yes")]
    pub batch_norm: bool,
    /// PointNet input alignment sub-network.
    #[serde(default)]
    pub t_net: bool,
    /// Seed for the FPS start index; `None` starts at index 0.
    #[serde(default)]
    pub fps_seed: Option<u64>,
    pub layers: Vec<LayerRecord>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Full,
    Desk,
    Toy,
}

impl FromStr for Preset {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            "toy" => Ok(Preset::Toy),
            other => Err(NetworkError::Spec(format!("unknown preset {other:?}"))),
        }
    }
}

fn mlp(c: &[usize]) -> LayerRecord {
    LayerRecord::Mlp { channels: c.to_vec() }
}

fn fp(c: &[usize]) -> LayerRecord {
    LayerRecord::FeaturePropagation { channels: c.to_vec() }
}

fn head(c: &[usize]) -> LayerRecord {
    LayerRecord::Head { channels: c.to_vec() }
}

fn sa(points: usize, radius: f64, group: usize, c: &[usize]) -> LayerRecord {
    LayerRecord::SetAbstraction { points, radius, group, channels: c.to_vec() }
}

fn edge(k: usize, c: &[usize]) -> LayerRecord {
    LayerRecord::EdgeConv { k, channels: c.to_vec() }
}

fn xconv(points: usize, k: usize, dilation: usize, lift: usize, channels: usize) -> LayerRecord {
    LayerRecord::XConv { points, k, dilation, lift, channels }
}

fn xdeconv(k: usize, dilation: usize, lift: usize, channels: usize) -> LayerRecord {
    LayerRecord::XDeconv { k, dilation, lift, channels }
}

fn shell(points: usize, k: usize, shells: usize, channels: usize) -> LayerRecord {
    LayerRecord::ShellConv { points, k, shells, channels }
}

fn ri(points: usize, k: usize, bins: usize, channels: usize) -> LayerRecord {
    LayerRecord::RiConv { points, k, bins, channels }
}

const RADII: [f64; 5] = [1.0, 2.0, 4.0, 6.0, 8.0];

impl ModelSpec {
    pub fn preset(architecture: Architecture, preset: Preset) -> ModelSpec {
        use Architecture::*;
        use Preset::*;
        let (n_points, layers) = match (architecture, preset) {
            (PointNet, Full) => (4096, vec![mlp(&[64, 64]), mlp(&[64, 128, 1024]), LayerRecord::GlobalFc { channels: vec![256, 128] }, head(&[512, 256, 128])]),
            (PointNet, Desk) => (512, vec![mlp(&[16, 16]), mlp(&[16, 32, 256]), LayerRecord::GlobalFc { channels: vec![64, 32] }, head(&[128, 64, 32])]),
            (PointNet, Toy) => (32, vec![mlp(&[8]), mlp(&[8, 8]), LayerRecord::GlobalFc { channels: vec![8] }, head(&[8])]),
            (PointNetPP, Full) => {
                let pts = [1024, 256, 64, 16, 8];
                let ch: [&[usize]; 5] = [&[32, 32, 64], &[64, 64, 128], &[128, 128, 256], &[256, 256, 512], &[512, 512, 1024]];
                let fps: [&[usize]; 5] = [&[512, 512], &[256, 256], &[256, 256], &[128, 128], &[128, 128, 128]];
                let mut l: Vec<_> = (0..5).map(|i| sa(pts[i], RADII[i], 32, ch[i])).collect();
                l.extend(fps.iter().map(|c| fp(c)));
                l.push(head(&[128]));
                (4096, l)
            }
            (PointNetPP, Desk) => {
                let pts = [256, 128, 64, 32, 16];
                let ch: [&[usize]; 5] = [&[8, 8, 16], &[16, 16, 32], &[32, 32, 64], &[64, 64, 128], &[128, 128, 256]];
                let fps: [&[usize]; 5] = [&[128, 128], &[64, 64], &[64, 64], &[32, 32], &[32, 32, 32]];
                let mut l: Vec<_> = (0..5).map(|i| sa(pts[i], RADII[i], 16, ch[i])).collect();
                l.extend(fps.iter().map(|c| fp(c)));
                l.push(head(&[32]));
                (512, l)
            }
            (PointNetPP, Toy) => {
                let pts = [16, 8, 4, 2, 1];
                let groups = [4, 4, 3, 2, 2];
                let mut l: Vec<_> = (0..5).map(|i| sa(pts[i], RADII[i] * 2.0, groups[i], &[6])).collect();
                l.extend((0..5).map(|_| fp(&[6])));
                l.push(head(&[6]));
                (32, l)
            }
            (DGCNN, Full) => (4096, vec![edge(32, &[64, 64]), edge(32, &[64, 64]), mlp(&[1024]), head(&[256, 256, 128])]),
            (DGCNN, Desk) => (512, vec![edge(32, &[16, 16]), edge(32, &[16, 16]), mlp(&[256]), head(&[64, 64, 32])]),
            (DGCNN, Toy) => (32, vec![edge(4, &[6]), edge(4, &[6]), mlp(&[8]), head(&[8])]),
            (PointCNN, Full) => (
                4096,
                vec![
                    xconv(4096, 8, 1, 32, 64),
                    xconv(1024, 12, 2, 32, 128),
                    xconv(256, 16, 2, 64, 256),
                    xdeconv(16, 2, 64, 128),
                    xdeconv(8, 2, 32, 64),
                    head(&[128, 64]),
                ],
            ),
            (PointCNN, Desk) => (
                512,
                vec![
                    xconv(512, 8, 1, 16, 32),
                    xconv(128, 8, 2, 16, 64),
                    xconv(32, 8, 2, 16, 96),
                    xdeconv(8, 2, 16, 64),
                    xdeconv(8, 2, 16, 32),
                    head(&[64, 32]),
                ],
            ),
            (PointCNN, Toy) => (32, vec![xconv(32, 3, 1, 4, 6), xconv(8, 3, 2, 4, 8), xdeconv(3, 2, 4, 6), head(&[6, 6])]),
            (ShellNet, Full) => (
                4096,
                vec![shell(1024, 16, 4, 64), shell(256, 16, 4, 128), shell(64, 8, 4, 256), fp(&[128]), fp(&[64]), fp(&[64]), head(&[64])],
            ),
            (ShellNet, Desk) => (
                512,
                vec![shell(256, 8, 2, 32), shell(64, 8, 2, 64), shell(16, 4, 2, 128), fp(&[64]), fp(&[32]), fp(&[32]), head(&[32])],
            ),
            (ShellNet, Toy) => (32, vec![shell(8, 4, 2, 8), shell(2, 2, 2, 8), fp(&[8]), fp(&[8]), head(&[8])]),
            (RIConv, Full) => (
                4096,
                vec![ri(4096, 16, 4, 64), ri(1024, 32, 4, 128), ri(256, 32, 4, 256), fp(&[128]), fp(&[64]), fp(&[64]), head(&[64])],
            ),
            (RIConv, Desk) => (
                512,
                vec![ri(512, 16, 4, 32), ri(128, 16, 4, 64), ri(32, 16, 4, 128), fp(&[64]), fp(&[32]), fp(&[32]), head(&[32])],
            ),
            (RIConv, Toy) => (32, vec![ri(32, 4, 2, 6), ri(8, 4, 2, 8), fp(&[8]), fp(&[6]), head(&[6])]),
        };
        ModelSpec { architecture, n_points, n_classes: 3, batch_norm: true, t_net: false, fps_seed: None, layers }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| NetworkError::Spec(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<ModelSpec> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| NetworkError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Indices of the layer records trained during fine-tuning by default:
    /// the head and the two feature layers before it.
    pub fn default_finetune_layers(&self) -> Vec<usize> {
        let n = self.layers.len();
        (n.saturating_sub(3)..n).collect()
    }

    pub fn validate(&self) -> Result<()> {
        use LayerRecord::*;
        let fail = |m: String| Err(NetworkError::Spec(format!("{}: {m}", self.architecture)));
        if self.n_points == 0 || self.n_classes < 2 {
            return fail(format!("n_points {} / n_classes {} invalid", self.n_points, self.n_classes));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let zero = match l {
                Mlp { channels } | GlobalFc { channels } | FeaturePropagation { channels } | EdgeConv { channels, .. } => {
                    channels.is_empty() || channels.contains(&0)
                }
                Head { channels } => channels.contains(&0),
                SetAbstraction { points, radius, group, channels } => {
                    *points == 0 || !(*radius > 0.0) || *group == 0 || channels.is_empty() || channels.contains(&0)
                }
                XConv { points, k, dilation, lift, channels } => [*points, *k, *dilation, *lift, *channels].contains(&0),
                XDeconv { k, dilation, lift, channels } => [*k, *dilation, *lift, *channels].contains(&0),
                ShellConv { points, k, shells, channels } => [*points, *k, *shells, *channels].contains(&0),
                RiConv { points, k, bins, channels } => [*points, *k, *bins, *channels].contains(&0) || k % bins != 0,
            };
            if zero {
                return fail(format!("layer {i} ({}) has a non-positive or inconsistent count", l.kind()));
            }
            if let EdgeConv { k, .. } = l {
                if *k > self.n_points {
                    return fail(format!("layer {i}: k = {k} exceeds {} points", self.n_points));
                }
            }
        }
        if !matches!(self.layers.last(), Some(Head { .. })) {
            return fail("the last layer must be a head".into());
        }
        let kinds: Vec<&str> = self.layers.iter().map(LayerRecord::kind).collect();
        let count = |k: &str| kinds.iter().filter(|&&x| x == k).count();
        let body = &kinds[..kinds.len() - 1];
        match self.architecture {
            Architecture::PointNet => {
                if body != ["mlp", "mlp", "global_fc"] {
                    return fail(format!("expected mlp, mlp, global_fc, head; got {kinds:?}"));
                }
            }
            Architecture::DGCNN => {
                if body != ["edge_conv", "edge_conv", "mlp"] {
                    return fail(format!("expected two edge_conv layers, mlp, head; got {kinds:?}"));
                }
            }
            Architecture::PointNetPP => {
                let (sa_n, fp_n) = (count("set_abstraction"), count("feature_propagation"));
                if sa_n != 5 || fp_n != 5 || body[..5].iter().any(|&k| k != "set_abstraction") {
                    return fail(format!("expected 5 set_abstraction then 5 feature_propagation layers, got {sa_n} and {fp_n}"));
                }
            }
            Architecture::PointCNN => self.check_encoder_decoder("x_conv", "x_deconv", 1)?,
            Architecture::ShellNet => self.check_encoder_decoder("shell_conv", "feature_propagation", 0)?,
            Architecture::RIConv => self.check_encoder_decoder("ri_conv", "feature_propagation", 0)?,
        }
        if self.architecture != Architecture::PointNet && self.t_net {
            return fail("t_net is only available for PointNet".into());
        }
        self.check_point_counts()
    }

    /// Encoder of `enc` layers followed by `enc_count - deficit` decoder layers.
    fn check_encoder_decoder(&self, enc: &str, dec: &str, deficit: usize) -> Result<()> {
        let kinds: Vec<&str> = self.layers[..self.layers.len() - 1].iter().map(LayerRecord::kind).collect();
        let e = kinds.iter().take_while(|&&k| k == enc).count();
        let d = kinds[e..].iter().take_while(|&&k| k == dec).count();
        if e == 0 || e + d != kinds.len() || d + deficit != e {
            return Err(NetworkError::Spec(format!(
                "{}: expected n {enc} layers then {} {dec} layers, got {kinds:?}",
                self.architecture,
                if deficit == 0 { "n" } else { "n-1" }
            )));
        }
        Ok(())
    }

    /// Encoder point counts must be non-increasing and neighborhoods must fit.
    fn check_point_counts(&self) -> Result<()> {
        let mut levels = vec![self.n_points];
        for (i, l) in self.layers.iter().enumerate() {
            let current = *levels.last().expect("non-empty");
            let Some(p) = l.points() else { continue };
            if p > current {
                return Err(NetworkError::Spec(format!("layer {i} samples {p} of {current} points")));
            }
            let need = match *l {
                LayerRecord::XConv { k, dilation, .. } => k * dilation,
                LayerRecord::ShellConv { k, shells, .. } => k * shells,
                LayerRecord::RiConv { k, .. } => k,
                _ => 0,
            };
            if need > current {
                return Err(NetworkError::Spec(format!("layer {i} needs {need} neighbors among {current} points")));
            }
            levels.push(p);
        }
        let mut level = levels.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if let LayerRecord::XDeconv { k, dilation, .. } = *l {
                if k * dilation > levels[level] {
                    return Err(NetworkError::Spec(format!(
                        "layer {i} needs {} neighbors among {} coarse points",
                        k * dilation,
                        levels[level]
                    )));
                }
                level -= 1;
            }
        }
        Ok(())
    }
}
