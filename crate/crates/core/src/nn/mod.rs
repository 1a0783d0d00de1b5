//! Dense tensors, reverse-mode differentiation and training utilities.

mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod param;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradReport};
pub use graph::{Graph, Var};
pub use kernels::ConvGeom;
pub use optim::{early_stopper, lr_at, AdamW, EarlyStop, TrainConfig};
pub use param::{Gradients, ParamId, ParamStore};
pub use tensor::{broadcast_shape, numel, strides, Real, Tensor};
