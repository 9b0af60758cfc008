//! Minimal numeric kernel: dense float32 tensors, reverse-mode gradients
//! for the ops the tagger needs, Adam with linear decay, a symmetric
//! Jacobi eigensolver, and a finite-difference gradient checker.

mod adam;
mod eig;
mod gradcheck;
mod graph;
mod kernels;
mod loss;
mod store;
mod tensor;

pub use adam::{adam_step, linear_lr, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use eig::{jacobi_eigh, sym_eig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{AttentionWeights, Graph, NodeId};
pub use loss::cross_entropy;
pub use store::{ParamEntry, ParamStore};
pub use tensor::Tensor;
