//! Offline goal-conditioned reinforcement learning with hierarchical,
//! relativised options.
//!
//! The crate contains six agent variants (flat IQL, three HIQL variants and
//! the two ARL variants) trained on synthetic maze datasets, together with a
//! finite-MDP analyzer for occupancy measures and concentrability
//! coefficients.
//!
//! Module map:
//! - [`tensor_core`]: dense tensors, reverse-mode autodiff, MLPs, Adam,
//!   Polyak targets and the scalar losses/normalizers.
//! - [`envs`]: gridmaze and pointmaze environments plus scripted dataset
//!   generation.
//! - [`data`]: the offline dataset and goal/waypoint samplers.
//! - [`agents`]: the algorithm variants, their updates, training and acting.
//! - [`tabular`]: exact finite-MDP analysis.
//! - [`harness`]: evaluation, bootstrap intervals and value-grid dumps.
//! - [`cli`]: configuration and the `arl` subcommands.

pub mod agents;
pub mod cli;
pub mod data;
pub mod envs;
pub mod error;
pub mod harness;
pub mod rng;
pub mod tabular;
pub mod tensor_core;

pub use error::{Error, Result};
