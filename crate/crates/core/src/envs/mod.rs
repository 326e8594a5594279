//! Goal-conditioned maze environments and scripted dataset generation.

pub mod behaviour;
pub mod dynamics;
pub mod maze;

pub use behaviour::{expert_action, generate_dataset, greedy_move, trajectory_span, Style, STITCH_RADIUS};
pub use dynamics::{action_dim, discrete_action, one_hot, reward, EnvState, GoalTest};
pub use maze::{builtin, Cell, MazeSpec, Teleport, BUILTIN_MAZES};
