//! Experiment orchestration: assembling block datasets, training and
//! fine-tuning models, evaluating whole plants and writing reports.

pub mod data;
mod error;
pub mod evaluate;
pub mod experiment;
pub mod matrix;
pub mod record;
pub mod report;
pub mod segment;
pub mod train;

pub use error::HarnessError;
pub use evaluate::{evaluate, evaluate_clouds, BlockPredictor, ConstantPredictor, Evaluation, OraclePredictor};
pub use experiment::{
    check_compatible, glob_match, resolve_mask, ExperimentSpec, ExperimentTag, OptimizerSettings, TrainConfig,
    DEFAULT_EPOCHS, DEFAULT_VAL_FRACTION, DESK_EPOCHS,
};
pub use matrix::{run_matrix, CellOutcome, MatrixOutcome, MatrixPlan};
pub use record::{CloudReport, EpochStats, RunRecord};
pub use report::{ComparisonRow, ComparisonTable};
pub use segment::segment;
pub use train::{evaluate_blocks, train, train_blocks, train_blocks_until};

pub type Result<T> = std::result::Result<T, HarnessError>;
