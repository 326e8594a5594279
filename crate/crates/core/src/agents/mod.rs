//! The six algorithm variants as compositions of shared updates.

pub mod agent;
pub mod spec;
pub mod train;
pub mod updates;

pub use agent::{Action, Agent, EmbedMode, NetId, OptionNorm};
pub use spec::{AgentSpec, PolicyLoss, Profile, Variant};
pub use train::{train, train_step, MetricLog, MetricRecord, TrainOutput};
pub use updates::{
    awr_weights, fit_high_q, update_high_policy, update_high_value_ivl, update_low_policy, update_low_value_iql,
    Losses,
};
