use crate::{CoreError, PartLabel, Result};

/// A 3D position in centimeters.
pub type Point3 = [f64; 3];

/// A named point cloud with optional per-point part labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub name: String,
    positions: Vec<Point3>,
    labels: Option<Vec<PartLabel>>,
}

impl LabeledPointCloud {
    pub fn new(
        name: impl Into<String>,
        positions: Vec<Point3>,
        labels: Option<Vec<PartLabel>>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(CoreError::Argument("point cloud must contain at least one point".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != positions.len() {
                return Err(CoreError::Argument(format!(
                    "{} labels for {} positions",
                    labels.len(),
                    positions.len()
                )));
            }
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(CoreError::Argument(format!("point {i} has a non-finite coordinate")));
        }
        Ok(LabeledPointCloud { name: name.into(), positions, labels })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn labels(&self) -> Option<&[PartLabel]> {
        self.labels.as_deref()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Returns a copy carrying `labels` instead of the current ones.
    pub fn with_labels(&self, labels: Vec<PartLabel>) -> Result<Self> {
        LabeledPointCloud::new(self.name.clone(), self.positions.clone(), Some(labels))
    }

    pub fn without_labels(&self) -> Self {
        LabeledPointCloud { name: self.name.clone(), positions: self.positions.clone(), labels: None }
    }

    /// Component-wise minimum and maximum corners.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}
