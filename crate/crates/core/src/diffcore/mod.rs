//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records each operation as it is evaluated; [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients into every node that
//! depends on a trainable leaf. Operations work on NHWC image batches and
//! row-major matrices, which is all the attention network needs.

mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod ops;
mod params;
mod scalar;
mod tensor;

pub use checkpoint::{Checkpoint, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, Var};
pub use ops::Padding;
pub use params::{Gradients, Init, Param, ParamStore, ParamVars};
pub use scalar::Real;
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use ops::{sigmoid, softmax_in_place};

#[cfg(test)]
mod tests;
