//! Scripted behaviour policies and offline dataset generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{action_dim, one_hot, EnvState};
use super::maze::{Cell, MazeSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, ids, Stream};

/// Dataset collection style.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    /// Long rollouts towards far random cells, re-targeted on arrival.
    Navigate,
    /// Short rollouts between cells near the trajectory's first cell.
    Stitch,
}

impl std::str::FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "navigate" => Ok(Style::Navigate),
            "stitch" => Ok(Style::Stitch),
            other => Err(Error::config(format!("unknown dataset style {other}"))),
        }
    }
}

/// Flood-fill radius (in cells) of stitch targets around the origin cell.
pub const STITCH_RADIUS: usize = 4;

const MAX_REROLLS: usize = 64;

/// Greedy move towards `target` along a flood-fill distance field:
/// the lowest-index move that reduces the distance. `None` when `from` is
/// the target or cannot reach it.
pub fn greedy_move(spec: &MazeSpec, field: &[Option<usize>], from: Cell) -> Option<usize> {
    let d = field[spec.index(from)]?;
    if d == 0 {
        return None;
    }
    (0..4).find(|&a| {
        spec.neighbor(from, a)
            .and_then(|n| field[spec.index(n)])
            .is_some_and(|dn| dn + 1 == d)
    })
}

/// Noise-free scripted action towards `goal`, which lies in cell
/// `field`'s target. Continuous mazes steer to the next cell's centre and,
/// once inside the goal cell, straight at the goal point.
pub fn expert_action(spec: &MazeSpec, field: &[Option<usize>], pos: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
    let Some(cell) = spec.cell_of(pos) else {
        return vec![0.0; action_dim(spec)];
    };
    let mv = greedy_move(spec, field, cell);
    if !spec.continuous {
        return match mv {
            Some(a) => one_hot(a),
            None => vec![0.0; 4],
        };
    }
    let aim = match mv {
        Some(a) => spec.neighbor(cell, a).expect("greedy move is free").center(),
        None => goal,
    };
    (0..2)
        .map(|i| ((aim[i] - pos[i]) / spec.max_step).clamp(-1.0, 1.0))
        .collect()
}

fn noisy(spec: &MazeSpec, a: Vec<f64>, noise: f64, rng: &mut Stream) -> Vec<f64> {
    if noise > 0.0 && rng.random::<f64>() < noise {
        if spec.continuous {
            vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
        } else {
            one_hot(rng.random_range(0..4))
        }
    } else {
        a
    }
}

fn pick_target(
    spec: &MazeSpec,
    style: Style,
    origin: Cell,
    current: Cell,
    free: &[Cell],
    rng: &mut Stream,
) -> Cell {
    match style {
        Style::Navigate => {
            // Far half of the reachable cells, by flood distance.
            let field = spec.distances_to(current);
            let max = free
                .iter()
                .filter_map(|&c| field[spec.index(c)])
                .max()
                .unwrap_or(0);
            let far: Vec<Cell> = free
                .iter()
                .copied()
                .filter(|&c| field[spec.index(c)].is_some_and(|d| 2 * d >= max && d > 0))
                .collect();
            if far.is_empty() {
                free[rng.random_range(0..free.len())]
            } else {
                far[rng.random_range(0..far.len())]
            }
        }
        Style::Stitch => {
            let field = spec.distances_to(origin);
            let near: Vec<Cell> = free
                .iter()
                .copied()
                .filter(|&c| c != current && field[spec.index(c)].is_some_and(|d| d <= STITCH_RADIUS))
                .collect();
            if near.is_empty() {
                current
            } else {
                near[rng.random_range(0..near.len())]
            }
        }
    }
}

fn rollout(
    spec: &MazeSpec,
    style: Style,
    horizon: usize,
    noise: f64,
    free: &[Cell],
    rng: &mut Stream,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let origin = free[rng.random_range(0..free.len())];
    let mut s = EnvState::at(spec.start_point(origin, rng));
    let mut states = Vec::with_capacity(2 * (horizon + 1));
    let mut actions = Vec::with_capacity(action_dim(spec) * horizon);
    let mut target = pick_target(spec, style, origin, origin, free, rng);
    let mut field = spec.distances_to(target);
    for _ in 0..horizon {
        let cell = spec.cell_of(s.pos)?;
        if cell == target {
            target = pick_target(spec, style, origin, cell, free, rng);
            field = spec.distances_to(target);
        }
        field[spec.index(cell)]?;
        let a = noisy(spec, expert_action(spec, &field, s.pos, target.center()), noise, rng);
        states.extend_from_slice(&s.pos);
        actions.extend_from_slice(&a);
        s = spec.step(&s, &a, rng);
    }
    states.extend_from_slice(&s.pos);
    Some((states, actions))
}

/// Generates `n` trajectories of exactly `h` steps with the scripted
/// shortest-path behaviour and epsilon-uniform action noise. Trajectory
/// attempts draw from their own streams, so output depends only on the
/// arguments.
pub fn generate_dataset(
    spec: &MazeSpec,
    style: Style,
    n: usize,
    h: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || h == 0 {
        return Err(Error::usage("dataset needs N >= 1 and H >= 1"));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::config(format!("noise {noise} not in [0,1]")));
    }
    let free = spec.free_cells();
    let mut ds = Dataset::new(&spec.id, h, 2, action_dim(spec), spec.goal_radius)?;
    let mut attempt = 0u64;
    for i in 0..n {
        let mut tries = 0;
        loop {
            let mut r = rng::stream(seed, ids::DATASET_BASE + attempt);
            attempt += 1;
            if let Some((states, actions)) = rollout(spec, style, h, noise, &free, &mut r) {
                ds.push(&states, &actions)?;
                break;
            }
            tries += 1;
            if tries >= MAX_REROLLS {
                return Err(Error::Unreachable(format!(
                    "trajectory {i}: no reachable scripted target after {MAX_REROLLS} attempts"
                )));
            }
        }
    }
    Ok(ds)
}

/// Largest flood distance from a trajectory's first cell to any cell it
/// visits.
pub fn trajectory_span(spec: &MazeSpec, ds: &Dataset, traj: usize) -> usize {
    let Some(first) = spec.cell_of([ds.state(traj, 0)[0], ds.state(traj, 0)[1]]) else {
        return 0;
    };
    let field = spec.distances_to(first);
    (0..=ds.horizon)
        .filter_map(|t| {
            let s = ds.state(traj, t);
            spec.cell_of([s[0], s[1]]).and_then(|c| field[spec.index(c)])
        })
        .max()
        .unwrap_or(0)
}
