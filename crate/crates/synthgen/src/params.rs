use serde::{Deserialize, Serialize};

use crate::{Result, SynthError};

/// Architectural parameters of a synthetic rosebush. Lengths are in cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Number of axes emerging from the crown.
    pub n_axes: usize,
    /// Probabilities of the long and short axis morphotypes; must sum to 1.
    pub axis_morphotype_probs: [f64; 2],
    pub internode_length_range: (f64, f64),
    /// Base radius of a first-order axis.
    pub branch_radius_range: (f64, f64),
    /// Inclusive range of leaflets per compound leaf.
    pub leaflets_per_leaf: (usize, usize),
    /// Probability that an axis terminates in a flower.
    pub flower_prob_per_axis: f64,
    /// Maximum branching order plus one.
    pub recursion_depth: usize,
    pub target_height_range: (f64, f64),
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            n_axes: 4,
            axis_morphotype_probs: [0.6, 0.4],
            internode_length_range: (2.6, 4.0),
            branch_radius_range: (0.26, 0.36),
            leaflets_per_leaf: (3, 7),
            flower_prob_per_axis: 0.55,
            recursion_depth: 2,
            target_height_range: (30.0, 50.0),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(SynthError::InvalidParams(format!("{name} must satisfy 0 < lo < hi, got ({lo}, {hi})")));
    }
    Ok(())
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_axes == 0 {
            return Err(SynthError::InvalidParams("n_axes must be at least 1".into()));
        }
        let [long, short] = self.axis_morphotype_probs;
        if !(0.0..=1.0).contains(&long) || !(0.0..=1.0).contains(&short) || ((long + short) - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidParams(format!(
                "axis_morphotype_probs must be probabilities summing to 1, got [{long}, {short}]"
            )));
        }
        check_range("internode_length_range", self.internode_length_range)?;
        check_range("branch_radius_range", self.branch_radius_range)?;
        check_range("target_height_range", self.target_height_range)?;
        let (lmin, lmax) = self.leaflets_per_leaf;
        if lmin == 0 || lmax < lmin {
            return Err(SynthError::InvalidParams(format!("leaflets_per_leaf must satisfy 1 <= lo <= hi, got ({lmin}, {lmax})")));
        }
        if !(0.0..=1.0).contains(&self.flower_prob_per_axis) {
            return Err(SynthError::InvalidParams(format!(
                "flower_prob_per_axis must lie in [0, 1], got {}",
                self.flower_prob_per_axis
            )));
        }
        if self.recursion_depth == 0 {
            return Err(SynthError::InvalidParams("recursion_depth must be at least 1".into()));
        }
        Ok(())
    }
}
