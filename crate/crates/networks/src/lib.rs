//! Point-set operators and six segmentation networks: PointNet,
//! PointNet++, DGCNN, PointCNN, ShellNet and RIConv.
//!
//! A [`ModelSpec`] declares the layer plan; [`build_model`] turns it into a
//! [`Checkpoint`] of named tensors that can be evaluated, differentiated and
//! saved in the autodiff container format.

mod error;
mod forward;
pub mod geometry;
mod model;
mod spec;

pub use error::NetworkError;
pub use forward::ForwardOutput;
pub use geometry::{
    ball_query, dilated_knn, farthest_point_sampling, interpolation_weights, knn, ri_bin_order, ri_features, shell_groups,
};
pub use model::{build_model, is_buffer, layer_of, Checkpoint, Provenance, StepResult, TrainMask, BN_MOMENTUM};
pub use spec::{Architecture, LayerRecord, ModelSpec, Preset};

pub type Result<T> = std::result::Result<T, NetworkError>;
