//! Dense `f64` tensors, a define-by-run reverse-mode tape, an AdamW optimizer
//! and a finite-difference gradient checker.

mod gradcheck;
mod graph;
pub mod ops;
mod optim;
mod param;
mod tensor;

pub use gradcheck::{grad_check, grad_check_all};
pub use graph::{Graph, ParamGrads, Var, LAYER_NORM_EPS};
pub use ops::{argmax, cosine_sim_matrix, cross_entropy, l2_normalize, log_softmax, softmax};
pub use optim::{AdamW, OptimState};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{dot, norm, Tensor};
