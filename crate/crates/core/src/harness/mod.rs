//! Training runs across variants and seeds, evaluation, and value grids.

pub mod eval;
pub mod grid;
pub mod plan;
pub mod protocol;
pub mod stats;

pub use eval::{evaluate, run_episode, step_budget, AgentController, Controller, EvalResult, ExpertController, GoalOutcome};
pub use grid::{dump_value_grid, translated_value_spread, GridTarget, ValueGrid};
pub use plan::{
    aggregate, eval_agent, results_csv, run_one, run_plan, seed_mean, AggregateRow, DatasetParams, ExperimentPlan,
    RunResult,
};
pub use protocol::{
    desk_plan, goal_classes, load_report, plan_hash, run_protocol, ProtocolReport, ProtocolRun, FAR_SPANS,
    SPREAD_DISPLACEMENTS,
};
pub use stats::{bootstrap_ci, bootstrap_means, quantile, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
