//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar consumes the tape and returns gradients for
//! every leaf created with `requires_grad`. All forward results are checked
//! for NaN/Inf and the producing operation is reported on failure.

mod container;
mod error;
pub mod finite_diff;
mod kernels;
mod optim;
mod tape;
mod tensor;

pub use container::{read_container, write_container, Container, DType};
pub use error::AutodiffError;
pub use optim::{adam_step, Moments, OptimizerState};
pub use tape::{BatchStats, Gradients, NormMode, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Ordered name → tensor map used for parameters, buffers and gradients.
pub type NamedTensors = std::collections::BTreeMap<String, Tensor>;
