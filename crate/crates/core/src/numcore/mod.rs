//! Dense tensors, reverse-mode differentiation and the optimizer.

mod adam;
mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{cosine, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
