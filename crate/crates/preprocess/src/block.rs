use rosepoint_core::{LabeledPointCloud, PartLabel, Point3};
use serde::{Deserialize, Serialize};

use crate::{PreprocessError, Result};

/// Block geometry and sampling parameters. Lengths are in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockSpec {
    pub edge: f64,
    pub offset: f64,
    pub n_points: usize,
    pub min_fraction: f64,
    pub voxel_grid: f64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        BlockSpec { edge: 10.0, offset: 0.0, n_points: 4096, min_fraction: 0.10, voxel_grid: 0.2 }
    }
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PreprocessError::InvalidSpec(m));
        if !(self.edge > 0.0 && self.edge.is_finite()) {
            return fail(format!("edge must be positive, got {}", self.edge));
        }
        if !(0.0 <= self.offset && self.offset < self.edge) {
            return fail(format!("offset must lie in [0, edge), got {}", self.offset));
        }
        if self.n_points == 0 {
            return fail("n_points must be at least 1".into());
        }
        if !(0.0 < self.min_fraction && self.min_fraction < 1.0) {
            return fail(format!("min_fraction must lie in (0, 1), got {}", self.min_fraction));
        }
        if !(self.voxel_grid > 0.0 && self.voxel_grid < self.edge) {
            return fail(format!("voxel_grid must lie in (0, edge), got {}", self.voxel_grid));
        }
        Ok(())
    }

    pub fn with_offset(self, offset: f64) -> Self {
        BlockSpec { offset, ..self }
    }

    /// Minimum number of points a block must hold to survive on its own.
    pub fn threshold(&self) -> f64 {
        self.min_fraction * self.n_points as f64
    }
}

/// Points of the source cloud falling in one grid cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBlock {
    pub cell_index: [i64; 3],
    pub point_indices: Vec<usize>,
}

/// A fixed-size block ready for a network.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBlock {
    /// Source-frame coordinates of every row.
    pub positions: Vec<Point3>,
    pub source_indices: Vec<usize>,
    pub labels: Option<Vec<PartLabel>>,
    /// Minimum corner of the block cube in the source frame.
    pub block_origin: Point3,
    pub edge: f64,
    pub offset: f64,
}

impl SampledBlock {
    pub fn from_indices(
        cloud: &LabeledPointCloud,
        indices: Vec<usize>,
        block_origin: Point3,
        edge: f64,
        offset: f64,
    ) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= cloud.len()) {
            return Err(PreprocessError::Argument(format!("source index {bad} out of range for {} points", cloud.len())));
        }
        let positions = indices.iter().map(|&i| cloud.positions()[i]).collect();
        let labels = cloud.labels().map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(SampledBlock { positions, source_indices: indices, labels, block_origin, edge, offset })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn center(&self) -> Point3 {
        std::array::from_fn(|k| self.block_origin[k] + 0.5 * self.edge)
    }

    /// Positions relative to the block center, as fed to the networks.
    pub fn centered_positions(&self) -> Vec<Point3> {
        let c = self.center();
        self.positions.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect()
    }
}
