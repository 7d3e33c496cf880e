//! Reverse-mode differentiation over dense row-major tensors.
//!
//! A [`Graph`] is a symbolic expression over named inputs and parameters
//! held in a [`ParamStore`]. [`Graph::forward`] evaluates it for concrete
//! inputs and caches every node value; [`Graph::backward`] then walks the
//! nodes in reverse and returns a gradient for every parameter.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, grad_check_steps, DEFAULT_GRAD_CHECK_EPSILON};
pub use graph::{Gradients, Graph, NodeId, Outputs};
pub use tensor::{ParamId, ParamStore, Tensor};
