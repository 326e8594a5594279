//! Dense tensors, reverse-mode autodiff and the network building blocks.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod kernels;
pub mod losses;
pub mod mlp;
pub mod policy;
pub mod tensor;

pub use adam::{Adam, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use losses::{expectile_loss, gaussian_log_prob, length_normalize, soft_normalize, Normalized};
pub use mlp::{mlp_forward, Bound, FinalInit, NetBundle};
pub use policy::{HeadKind, PolicyHead};
pub use tensor::Tensor;
