//! Offline dataset and the goal/waypoint samplers.

pub mod dataset;
pub mod sampler;

pub use dataset::{Dataset, Trajectory};
pub use sampler::{
    relabel_reward, sample_batch, sample_goal, sample_waypoint, truncated_geometric, waypoint_index,
    GoalSampleConfig, Provenance, SampledBatch,
};
