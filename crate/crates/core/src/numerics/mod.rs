//! Dense tensors, reverse-mode differentiation, optimizers and gradient checking.

mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many};
pub use graph::{sigmoid, Gradients, Graph, Var, PROB_EPS, STANDARDIZE_EPS};
pub use optim::{Adam, Optimizer, OptimizerKind, SgdMomentum};
pub use tensor::Tensor;
