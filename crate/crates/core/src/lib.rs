//! Core types shared by every stage of the rosebush segmentation toolkit.
//!
//! Point clouds are stored in centimeters with one [`PartLabel`] per point.
//! The canonical class order is Flower, Leaf, Stem (codes 0, 1, 2) in every
//! file and report this workspace produces.

pub mod cloud;
pub mod error;
pub mod io;
pub mod labels;
pub mod metrics;
pub mod scores;
pub mod seed;

pub use cloud::{LabeledPointCloud, Point3};
pub use error::CoreError;
pub use io::{load_cloud, read_cloud, save_cloud, write_cloud};
pub use labels::{merge_organ_label, merge_organ_labels, OrganLabel, PartLabel, NUM_CLASSES};
pub use metrics::{
    class_distribution, compute_metrics, ClassMetrics, ConfusionCounts, MetricsReport,
};
pub use scores::{argmax_row, ClassScores};
pub use seed::derive_seed;

pub type Result<T> = std::result::Result<T, CoreError>;
