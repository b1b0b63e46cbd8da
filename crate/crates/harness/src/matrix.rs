//! The architecture × experiment matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rosepoint_core::load_cloud;
use rosepoint_networks::{Architecture, ModelSpec, Preset};
use rosepoint_preprocess::BlockSpec;
use serde::{Deserialize, Serialize};

use crate::error::io_err;
use crate::evaluate::evaluate_clouds;
use crate::record::RunRecord;
use crate::report::{chart_entries, iou_bar_chart, ComparisonTable};
use crate::{train, ExperimentSpec, ExperimentTag, HarnessError, Result, TrainConfig, DEFAULT_EPOCHS, DEFAULT_VAL_FRACTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPlan {
    /// Architecture names such as `"PointNet++"`.
    pub architectures: Vec<String>,
    #[serde(default = "default_preset")]
    pub preset: String,
    pub experiments: Vec<ExperimentTag>,
    /// Training clouds of the `I`, `II`, `III` and `S` sets.
    pub train_sets: BTreeMap<ExperimentTag, Vec<PathBuf>>,
    pub test_clouds: Vec<PathBuf>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Fine-tuning epochs of transfer cells, `epochs` when absent.
    #[serde(default)]
    pub finetune_epochs: Option<usize>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub finetune_mask: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    /// Block geometry; `n_points` follows the model preset.
    #[serde(default)]
    pub block: BlockSpec,
}

fn default_preset() -> String {
    "full".into()
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

fn default_val_fraction() -> f64 {
    DEFAULT_VAL_FRACTION
}

impl MatrixPlan {
    pub fn architectures(&self) -> Result<Vec<Architecture>> {
        self.architectures.iter().map(|a| Ok(a.parse::<Architecture>()?)).collect()
    }

    pub fn preset(&self) -> Result<Preset> {
        Ok(self.preset.parse()?)
    }

    /// Cells in execution order: `S` before any transfer cell needing it.
    pub fn cells(&self) -> Vec<ExperimentTag> {
        let mut tags = self.experiments.clone();
        if tags.iter().any(|t| t.is_transfer()) && !tags.contains(&ExperimentTag::S) {
            tags.push(ExperimentTag::S);
        }
        tags.sort();
        tags.dedup();
        tags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub architecture: String,
    pub tag: ExperimentTag,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutcome {
    pub cells: Vec<CellOutcome>,
    pub table: ComparisonTable,
}

pub fn arch_slug(name: &str) -> String {
    name.to_ascii_lowercase().replace("++", "pp")
}

fn cell_stem(out_dir: &Path, arch: &str, tag: ExperimentTag) -> PathBuf {
    out_dir.join(format!("{}_{}", arch_slug(arch), tag.slug()))
}

/// One line per cell: status and final macro metrics.
pub fn cells_csv(cells: &[CellOutcome]) -> String {
    let mut out = String::from("architecture,tag,status,acc,miou,flower_iou,leaf_iou,stem_iou,error\n");
    for c in cells {
        let (status, metrics) = match (&c.record, &c.error) {
            (Some(r), None) => ("ok", r.macro_report.as_ref()),
            _ => ("failed", None),
        };
        let m = metrics
            .map(|m| format!("{},{},{},{},{}", m.acc, m.miou, m.per_class[0].iou, m.per_class[1].iou, m.per_class[2].iou))
            .unwrap_or_else(|| ",,,,".into());
        let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(out, "{},{},{status},{m},{err}", c.architecture, c.tag);
    }
    out
}

fn run_cell(
    plan: &MatrixPlan,
    arch: Architecture,
    preset: Preset,
    tag: ExperimentTag,
    test: &[rosepoint_core::LabeledPointCloud],
    out_dir: &Path,
) -> Result<RunRecord> {
    let start = Instant::now();
    let model = ModelSpec::preset(arch, preset);
    let set = tag.real_part().unwrap_or(tag);
    let clouds = plan
        .train_sets
        .get(&set)
        .ok_or_else(|| HarnessError::Config(format!("no training set for {set}")))?
        .clone();
    let mut spec = ExperimentSpec::new(tag, clouds);
    spec.val_fraction = plan.val_fraction;
    spec.seed = plan.seed;
    spec.block = BlockSpec { n_points: model.n_points, ..plan.block };
    spec.epochs = plan.epochs;
    if tag.is_transfer() {
        let pretrained = cell_stem(out_dir, arch.name(), ExperimentTag::S).with_extension("ckpt");
        if !pretrained.exists() {
            return Err(HarnessError::Config(format!("no pretrained checkpoint at {}", pretrained.display())));
        }
        spec.pretrain_checkpoint = Some(pretrained);
        spec.finetune_mask = plan.finetune_mask.clone();
        spec.epochs = plan.finetune_epochs.unwrap_or(plan.epochs);
    }
    let (ckpt, mut record) = train(&spec, &model, &TrainConfig::preset(arch))?;
    let stem = cell_stem(out_dir, arch.name(), tag);
    ckpt.save(stem.with_extension("ckpt"))?;
    if !test.is_empty() {
        let eval = evaluate_clouds(&ckpt, test, &spec.block, plan.seed)?;
        record.test = eval.per_cloud;
        record.macro_report = Some(eval.macro_report);
    }
    record.wall_clock = start.elapsed().as_secs_f64();
    record.save(stem.with_extension("json"))?;
    Ok(record)
}

/// Runs every cell, writing `<arch>_<tag>.json` records and checkpoints,
/// `cells.csv`, `comparison.csv` and `iou.svg` to `out_dir`. A failing cell
/// is recorded and the remaining cells still run.
pub fn run_matrix(plan: &MatrixPlan, out_dir: impl AsRef<Path>) -> Result<MatrixOutcome> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let architectures = plan.architectures()?;
    let preset = plan.preset()?;
    let test = plan.test_clouds.iter().map(|p| Ok(load_cloud(p)?)).collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for &arch in &architectures {
        for tag in plan.cells() {
            let outcome = run_cell(plan, arch, preset, tag, &test, out_dir);
            let (record, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            cells.push(CellOutcome { architecture: arch.name().to_string(), tag, record, error });
        }
    }
    let names: Vec<String> = architectures.iter().map(|a| a.name().to_string()).collect();
    let records: Vec<RunRecord> = cells.iter().filter_map(|c| c.record.clone()).collect();
    let table = ComparisonTable::from_records(&names, &records);
    write_reports(out_dir, &table, &records)?;
    let path = out_dir.join("cells.csv");
    fs::write(&path, cells_csv(&cells)).map_err(io_err(path))?;
    Ok(MatrixOutcome { cells, table })
}

/// Writes `comparison.csv` and `iou.svg`.
pub fn write_reports(out_dir: &Path, table: &ComparisonTable, records: &[RunRecord]) -> Result<()> {
    let path = out_dir.join("comparison.csv");
    fs::write(&path, table.to_csv()).map_err(io_err(path))?;
    let path = out_dir.join("iou.svg");
    fs::write(&path, iou_bar_chart("Per-class IoU", &chart_entries(records))).map_err(io_err(path))
}

/// Rebuilds the reports from the run records found in `dir`.
pub fn report_dir(dir: impl AsRef<Path>) -> Result<ComparisonTable> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let records: Vec<RunRecord> = paths.iter().filter_map(|p| RunRecord::load(p).ok()).collect();
    let mut names: Vec<String> = Vec::new();
    for arch in Architecture::ALL {
        if records.iter().any(|r| r.architecture == arch.name()) {
            names.push(arch.name().to_string());
        }
    }
    let table = ComparisonTable::from_records(&names, &records);
    write_reports(dir, &table, &records)?;
    Ok(table)
}
