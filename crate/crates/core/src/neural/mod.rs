//! Dense tensors with tape-based reverse-mode differentiation, plus the
//! layers and optimizer the network is built from.
//!
//! A [`Tape`] records each operation as it runs. [`Tape::backward`] consumes
//! the tape and returns the gradients of a scalar loss with respect to every
//! tensor recorded with `requires_grad`.

mod adam;
mod kernels;
mod layers;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    glorot_uniform, BatchNorm, Dense, DepthwiseConv, ParamEntry, ParamId, ParamStore,
};
pub use scalar::Scalar;
pub use tape::{softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Train or inference behaviour for batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch-norm running-average momentum.
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;
/// Batch-norm variance epsilon.
pub const BATCH_NORM_EPSILON: f64 = 1e-3;

#[cfg(test)]
mod tests;
