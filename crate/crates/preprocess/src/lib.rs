//! Block preprocessing for point networks.
//!
//! A cloud is cut into cubic cells ([`partition`]), undersized cells are
//! folded into their nearest neighbor ([`reassign_small`]), sparse voxels are
//! densified by copying points ([`voxel_balance`]) and the result is split
//! into fixed-size blocks ([`sample_fixed`]). [`make_blocks`] runs the whole
//! chain for one or more grid offsets and [`merge_predictions`] maps block
//! scores back onto the source cloud.

pub mod archive;
pub mod block;
pub mod error;
pub mod merge;
pub mod pipeline;

pub use archive::{read_block_archive, write_block_archive, write_block_archives};
pub use block::{BlockSpec, RawBlock, SampledBlock};
pub use error::PreprocessError;
pub use merge::merge_predictions;
pub use pipeline::{
    cell_origin, make_blocks, partition, reassign_small, sample_fixed, voxel_balance, DEFAULT_OFFSETS,
};

pub type Result<T> = std::result::Result<T, PreprocessError>;
