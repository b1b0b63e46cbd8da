//! Adam with a staircase exponential learning-rate schedule.

use std::collections::BTreeMap;

use crate::{AutodiffError, NamedTensors, Result};

/// First and second moment accumulators of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Samples between two learning-rate decays.
    pub decay_step: u64,
    pub decay_rate: f64,
    /// L2 coefficient added to gradients, `None` to disable.
    pub weight_decay: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub samples_seen: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(
        learning_rate: f64,
        batch_size: usize,
        decay_step: u64,
        decay_rate: f64,
        weight_decay: Option<f64>,
    ) -> Result<Self> {
        if !(learning_rate > 0.0) || batch_size == 0 || decay_step == 0 || !(decay_rate > 0.0) {
            return Err(AutodiffError::Argument(format!(
                "invalid optimizer settings: lr {learning_rate}, batch {batch_size}, decay {decay_step}/{decay_rate}"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            batch_size,
            decay_step,
            decay_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            samples_seen: 0,
            moments: BTreeMap::new(),
        })
    }

    /// `base · decay_rate^⌊samples_seen / decay_step⌋`
    pub fn effective_rate(&self) -> f64 {
        let exponent = (self.samples_seen / self.decay_step) as i32;
        self.learning_rate * self.decay_rate.powi(exponent)
    }

    /// Clears moments and counters, keeping the hyper-parameters.
    pub fn reset(&mut self) {
        self.step = 0;
        self.samples_seen = 0;
        self.moments.clear();
    }
}

/// One Adam update of every parameter that has an entry in `grads`.
/// Parameters without a gradient are left untouched, which is how frozen
/// layers are expressed.
pub fn adam_step(params: &mut NamedTensors, grads: &NamedTensors, state: &mut OptimizerState) -> Result<()> {
    let lr = state.effective_rate();
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for (name, grad) in grads {
        let param = params
            .get_mut(name)
            .ok_or_else(|| AutodiffError::Argument(format!("gradient for unknown parameter {name}")))?;
        if param.shape() != grad.shape() {
            return Err(AutodiffError::Shape {
                op: "adam_step",
                lhs: param.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        let n = param.numel();
        let moments = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| Moments { first: vec![0.0; n], second: vec![0.0; n] });
        let values = param.data_mut();
        for i in 0..n {
            let mut g = grad.data()[i];
            if let Some(wd) = state.weight_decay {
                g += wd * values[i];
            }
            let m = state.beta1 * moments.first[i] + (1.0 - state.beta1) * g;
            let v = state.beta2 * moments.second[i] + (1.0 - state.beta2) * g * g;
            moments.first[i] = m;
            moments.second[i] = v;
            values[i] -= lr * (m / bias1) / ((v / bias2).sqrt() + state.epsilon);
        }
    }
    state.samples_seen += state.batch_size as u64;
    Ok(())
}
