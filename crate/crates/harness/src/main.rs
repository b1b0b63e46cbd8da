use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rosepoint_core::load_cloud;
use rosepoint_harness::data::cloud_blocks;
use rosepoint_harness::matrix::report_dir;
use rosepoint_harness::{
    evaluate, run_matrix, segment, train, ExperimentSpec, ExperimentTag, MatrixPlan, OptimizerSettings, TrainConfig,
};
use rosepoint_networks::{Architecture, Checkpoint, ModelSpec, Preset};
use rosepoint_preprocess::{write_block_archives, BlockSpec};
use rosepoint_synthgen::{generate_dataset_with_density, PlantParams, SAMPLING_DENSITY};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "rosepoint", version, about = "Rosebush part segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset
    Generate(GenerateArgs),
    /// Cut clouds into sampled blocks and write block archives
    Preprocess(PreprocessArgs),
    /// Train a model from scratch
    Train(TrainArgs),
    /// Fine-tune a pretrained model on new clouds
    Finetune(TrainArgs),
    /// Evaluate a model on labeled clouds
    Eval(EvalArgs),
    /// Label one cloud with a model
    Segment(SegmentArgs),
    /// Run an architecture × experiment matrix
    Matrix(MatrixArgs),
    /// Rebuild the comparison table and chart from run records
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, env = "ROSEPOINT_PLANTS", default_value_t = 12)]
    plants: usize,
    #[arg(long, env = "ROSEPOINT_SEED", default_value_t = 0)]
    seed: u64,
    /// Surface samples per cm²
    #[arg(long, env = "ROSEPOINT_DENSITY", default_value_t = SAMPLING_DENSITY)]
    density: f64,
    /// TOML file of plant parameters
    #[arg(long, env = "ROSEPOINT_PARAMS")]
    params: Option<PathBuf>,
    #[arg(long, env = "ROSEPOINT_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct BlockArgs {
    #[arg(long, env = "ROSEPOINT_EDGE")]
    edge: Option<f64>,
    #[arg(long, env = "ROSEPOINT_N_POINTS")]
    n_points: Option<usize>,
    #[arg(long, env = "ROSEPOINT_MIN_FRACTION")]
    min_fraction: Option<f64>,
    #[arg(long, env = "ROSEPOINT_VOXEL_GRID")]
    voxel_grid: Option<f64>,
}

impl BlockArgs {
    fn apply(&self, mut spec: BlockSpec) -> BlockSpec {
        spec.edge = self.edge.unwrap_or(spec.edge);
        spec.n_points = self.n_points.unwrap_or(spec.n_points);
        spec.min_fraction = self.min_fraction.unwrap_or(spec.min_fraction);
        spec.voxel_grid = self.voxel_grid.unwrap_or(spec.voxel_grid);
        spec
    }
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "cloud", env = "ROSEPOINT_CLOUDS", value_delimiter = ',', required = true)]
    clouds: Vec<PathBuf>,
    #[command(flatten)]
    block: BlockArgs,
    #[arg(long, env = "ROSEPOINT_SEED", default_value_t = 0)]
    seed: u64,
    /// Archive path; one file per block offset is written
    #[arg(long, env = "ROSEPOINT_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, env = "ROSEPOINT_ARCH")]
    arch: Option<String>,
    /// full, desk or toy
    #[arg(long, env = "ROSEPOINT_PRESET")]
    preset: Option<String>,
    /// TOML model spec, instead of a preset
    #[arg(long, env = "ROSEPOINT_MODEL_SPEC")]
    model_spec: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML file with [experiment], [model] and [optimizer] sections
    #[arg(long, env = "ROSEPOINT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "ROSEPOINT_TAG")]
    tag: Option<ExperimentTag>,
    #[arg(long = "cloud", env = "ROSEPOINT_CLOUDS", value_delimiter = ',')]
    clouds: Vec<PathBuf>,
    #[arg(long, env = "ROSEPOINT_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "ROSEPOINT_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ROSEPOINT_VAL_FRACTION")]
    val_fraction: Option<f64>,
    #[arg(long, env = "ROSEPOINT_PRETRAINED")]
    pretrained: Option<PathBuf>,
    /// Parameter-name patterns to fine-tune; pass an empty value for all
    #[arg(long = "mask", env = "ROSEPOINT_MASK", value_delimiter = ',', num_args = 0..)]
    mask: Option<Vec<String>>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    block: BlockArgs,
    #[arg(long, env = "ROSEPOINT_LR")]
    learning_rate: Option<f64>,
    #[arg(long, env = "ROSEPOINT_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "ROSEPOINT_OUT")]
    out: PathBuf,
    /// Run record JSON, next to the checkpoint by default
    #[arg(long, env = "ROSEPOINT_RECORD")]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, env = "ROSEPOINT_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long = "cloud", env = "ROSEPOINT_CLOUDS", value_delimiter = ',', required = true)]
    clouds: Vec<PathBuf>,
    #[command(flatten)]
    block: BlockArgs,
    #[arg(long, env = "ROSEPOINT_SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV of the macro metrics; per-cloud files are written alongside
    #[arg(long, env = "ROSEPOINT_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long, env = "ROSEPOINT_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long, env = "ROSEPOINT_CLOUD")]
    cloud: PathBuf,
    #[command(flatten)]
    block: BlockArgs,
    #[arg(long, env = "ROSEPOINT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "ROSEPOINT_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct MatrixArgs {
    /// TOML matrix plan
    #[arg(long, env = "ROSEPOINT_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "ROSEPOINT_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "ROSEPOINT_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ROSEPOINT_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding run record JSON files
    #[arg(long, env = "ROSEPOINT_DIR")]
    dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    experiment: Option<ExperimentSpec>,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    optimizer: OptimizerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    architecture: Option<String>,
    preset: Option<String>,
    spec: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerSection {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    decay_step: Option<u64>,
    decay_rate: Option<f64>,
    weight_decay: Option<f64>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn model_spec(args: &ModelArgs, section: &ModelSection) -> anyhow::Result<ModelSpec> {
    if let Some(path) = args.model_spec.as_ref().or(section.spec.as_ref()) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(ModelSpec::from_toml(&text)?);
    }
    let Some(arch) = args.arch.as_ref().or(section.architecture.as_ref()) else {
        bail!("no architecture given (--arch or [model] architecture)");
    };
    let arch: Architecture = arch.parse()?;
    let preset: Preset = args.preset.as_deref().or(section.preset.as_deref()).unwrap_or("full").parse()?;
    Ok(ModelSpec::preset(arch, preset))
}

fn run_train(args: TrainArgs, finetune: bool) -> anyhow::Result<()> {
    let config: RunConfig = match &args.config {
        Some(path) => read_toml(path)?,
        None => RunConfig::default(),
    };
    let default_tag = if finetune { ExperimentTag::SI } else { ExperimentTag::S };
    let mut spec = config.experiment.unwrap_or_else(|| ExperimentSpec::new(default_tag, Vec::new()));
    if let Some(tag) = args.tag {
        spec.tag = tag;
    }
    if !args.clouds.is_empty() {
        spec.train_clouds = args.clouds.clone();
    }
    spec.epochs = args.epochs.unwrap_or(spec.epochs);
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.val_fraction = args.val_fraction.unwrap_or(spec.val_fraction);
    if args.pretrained.is_some() {
        spec.pretrain_checkpoint = args.pretrained.clone();
    }
    if let Some(mask) = &args.mask {
        spec.finetune_mask = Some(mask.iter().filter(|m| !m.is_empty()).cloned().collect());
    }
    if finetune != spec.tag.is_transfer() {
        bail!("`{}` does not run experiment {}", if finetune { "finetune" } else { "train" }, spec.tag);
    }
    let model = model_spec(&args.model, &config.model)?;
    spec.block = args.block.apply(BlockSpec { n_points: model.n_points, ..spec.block });
    let arch = model.architecture;
    let preset = TrainConfig::preset(arch);
    let o = &config.optimizer;
    let settings = OptimizerSettings {
        learning_rate: args.learning_rate.or(o.learning_rate).unwrap_or(preset.learning_rate),
        batch_size: args.batch_size.or(o.batch_size).unwrap_or(preset.batch_size),
        decay_step: o.decay_step.unwrap_or(preset.decay_step),
        decay_rate: o.decay_rate.unwrap_or(preset.decay_rate),
        weight_decay: o.weight_decay.or(preset.weight_decay),
    };
    let (ckpt, record) = train(&spec, &model, &settings)?;
    ckpt.save(&args.out)?;
    let record_path = args.record.unwrap_or_else(|| args.out.with_extension("json"));
    record.save(&record_path)?;
    if let Some(last) = record.final_epoch() {
        println!(
            "{} {}: epoch {} train loss {:.4} acc {:.4}{}",
            arch,
            spec.tag,
            last.epoch + 1,
            last.train_loss,
            last.train_acc,
            last.val_acc.map(|a| format!(" val acc {a:.4}")).unwrap_or_default()
        );
    }
    println!("wrote {} and {}", args.out.display(), record_path.display());
    Ok(())
}

fn block_for(ckpt: &Checkpoint, args: &BlockArgs) -> BlockSpec {
    args.apply(BlockSpec { n_points: ckpt.spec.n_points, ..BlockSpec::default() })
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => {
            let params: PlantParams = match &a.params {
                Some(p) => read_toml(p)?,
                None => PlantParams::default(),
            };
            let manifest = generate_dataset_with_density(a.plants, &params, a.seed, a.density, &a.out)?;
            println!("wrote {} plants to {}", manifest.entries.len(), a.out.display());
        }
        Command::Preprocess(a) => {
            let spec = a.block.apply(BlockSpec::default());
            let clouds = a.clouds.iter().map(load_cloud).collect::<Result<Vec<_>, _>>()?;
            let blocks: Vec<_> = cloud_blocks(&clouds, &spec, a.seed)?.into_iter().flatten().collect();
            for path in write_block_archives(&a.out, &spec, &blocks)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(a) => run_train(a, false)?,
        Command::Finetune(a) => run_train(a, true)?,
        Command::Eval(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            let spec = block_for(&ckpt, &a.block);
            let eval = evaluate(&ckpt, &a.clouds, &spec, a.seed)?;
            for c in &eval.per_cloud {
                println!("{}: acc {:.4} miou {:.4}", c.cloud, c.report.acc, c.report.miou);
            }
            println!("macro: acc {:.4} miou {:.4}", eval.macro_report.acc, eval.macro_report.miou);
            if let Some(out) = a.out {
                fs::write(&out, eval.macro_report.to_csv())?;
                for c in &eval.per_cloud {
                    fs::write(out.with_file_name(format!("{}_metrics.csv", c.cloud)), c.report.to_csv())?;
                }
            }
        }
        Command::Segment(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            let spec = block_for(&ckpt, &a.block);
            match segment(&ckpt, &a.cloud, &a.out, &spec, a.seed)? {
                Some(r) => println!("wrote {}: acc {:.4} miou {:.4}", a.out.display(), r.acc, r.miou),
                None => println!("wrote {}", a.out.display()),
            }
        }
        Command::Matrix(a) => {
            let mut plan: MatrixPlan = read_toml(&a.config)?;
            plan.epochs = a.epochs.unwrap_or(plan.epochs);
            plan.seed = a.seed.unwrap_or(plan.seed);
            let outcome = run_matrix(&plan, &a.out)?;
            for c in &outcome.cells {
                match (&c.record, &c.error) {
                    (Some(r), _) => println!(
                        "{} {}: {}",
                        c.architecture,
                        c.tag,
                        r.macro_report.as_ref().map(|m| format!("miou {:.4}", m.miou)).unwrap_or_else(|| "trained".into())
                    ),
                    (None, Some(e)) => println!("{} {}: failed: {e}", c.architecture, c.tag),
                    _ => {}
                }
            }
            print!("{}", outcome.table.to_csv());
        }
        Command::Report(a) => {
            let table = report_dir(&a.dir)?;
            print!("{}", table.to_csv());
        }
    }
    Ok(())
}
