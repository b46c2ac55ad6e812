//! State/object relation model for compositional zero-shot learning.
//!
//! The crate trains a three-branch classifier over frozen image/text
//! features: a composition branch and two relation branches that chain
//! cross-attention over state and object prototypes in opposite orders.
//! Around the model it provides the full closed-world / open-world
//! evaluation protocol (calibration-bias sweep, S/U/HM/AUC) and the
//! path-ablation and fusion-weight experiments.
//!
//! Module map:
//!
//! - [`diffmath`]: tensors, reverse-mode tape, optimizer, gradient checker
//! - [`dataset`]: composition space, synthetic generator, feature files, batching
//! - [`model`]: adapters, cross-attention blocks, branch forward passes, checkpoints
//! - [`objective`]: training losses, fused inference scores, prediction
//! - [`eval`]: score matrices, bias sweep, metrics, experiment runners
//! - [`runner`]: configuration, training loop, manifests, command line
//!
//! See the `examples/` directory for one runnable program per capability.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diffmath;
pub mod error;
pub mod eval;
pub mod model;
pub mod objective;
pub mod runner;
pub mod seed;

pub use error::{Error, Result};
