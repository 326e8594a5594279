//! Transition function, goal test and reward.
//!
//! States are 2-vectors `(x, y)` in both modes; discrete states sit at cell
//! centres so `x = col + 0.5`, `y = row + 0.5`.

use rand::Rng;

use super::maze::{Cell, MazeSpec};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub t: usize,
}

impl EnvState {
    pub fn at(pos: [f64; 2]) -> Self {
        Self { pos, t: 0 }
    }
}

/// Goal-conditioned pseudo-termination: fires when the state lies inside
/// the closed ball of `radius` around `goal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalTest {
    pub goal: [f64; 2],
    pub radius: f64,
}

impl GoalTest {
    pub fn fires(&self, s: &[f64]) -> bool {
        let dx = s[0] - self.goal[0];
        let dy = s[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt() <= self.radius
    }
}

/// `0` when the goal test fires, `-1` otherwise.
pub fn reward(s: &[f64], g: &GoalTest) -> f64 {
    if g.fires(s) {
        0.0
    } else {
        -1.0
    }
}

/// Number of action components: 2 for continuous mazes and a one-hot of
/// four moves for discrete ones.
pub fn action_dim(spec: &MazeSpec) -> usize {
    if spec.continuous {
        2
    } else {
        4
    }
}

/// Discrete move index of an action vector (the largest component, lowest
/// index on ties).
pub fn discrete_action(a: &[f64]) -> usize {
    crate::tensor_core::policy::argmax(a)
}

pub fn one_hot(a: usize) -> Vec<f64> {
    let mut v = vec![0.0; 4];
    v[a] = 1.0;
    v
}

impl MazeSpec {
    pub fn goal_test(&self, goal: [f64; 2]) -> GoalTest {
        GoalTest {
            goal,
            radius: self.goal_radius,
        }
    }

    /// One transition. Continuous actions are clipped to `[-1, 1]` per axis
    /// and scaled by `max_step`; motion is resolved x first, then y, and an
    /// axis whose move would end in a wall (or off the grid) stays put.
    /// Entering a teleport pad moves the agent to an exit cell centre drawn
    /// from `env_rng`.
    pub fn step(&self, s: &EnvState, a: &[f64], env_rng: &mut Stream) -> EnvState {
        let before = self.cell_of(s.pos);
        let pos = if self.continuous {
            let mut p = s.pos;
            for axis in 0..2 {
                let delta = a.get(axis).copied().unwrap_or(0.0).clamp(-1.0, 1.0) * self.max_step;
                let mut q = p;
                q[axis] += delta;
                if self.point_is_free(q) {
                    p = q;
                }
            }
            p
        } else {
            match before.and_then(|c| self.neighbor(c, discrete_action(a))) {
                Some(n) => n.center(),
                None => s.pos,
            }
        };
        let after = self.cell_of(pos);
        let pos = match after {
            Some(c) if after != before => match self.teleport_at(c) {
                Some(t) => t.exits[env_rng.random_range(0..t.exits.len())].center(),
                None => pos,
            },
            _ => pos,
        };
        EnvState { pos, t: s.t + 1 }
    }

    /// Uniform start point inside `cell`: the centre for discrete mazes,
    /// centre plus a jitter of up to 0.25 per axis for continuous ones.
    pub fn start_point(&self, cell: Cell, rng: &mut Stream) -> [f64; 2] {
        let c = cell.center();
        if self.continuous {
            [
                c[0] + rng.random_range(-0.25..=0.25),
                c[1] + rng.random_range(-0.25..=0.25),
            ]
        } else {
            c
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::maze::builtin;
    use crate::rng::stream;
    use std::path::Path;

    #[test]
    fn wall_blocks_axis() {
        let m = builtin("pointmaze15").unwrap();
        let mut rng = stream(0, 3);
        // (1,1) centre; wall at row 0 above.
        let s = EnvState::at([1.5, 1.5]);
        let up = m.step(&s, &[0.0, -1.0], &mut rng);
        let up2 = m.step(&up, &[0.0, -1.0], &mut rng);
        let up3 = m.step(&up2, &[0.0, -1.0], &mut rng);
        assert_eq!(up3.pos[1], up2.pos[1]);
        assert!(up2.pos[1] >= 1.0);
        let diag = m.step(&up3, &[1.0, -1.0], &mut rng);
        assert!((diag.pos[0] - 1.7).abs() < 1e-12);
        assert_eq!(diag.pos[1], up3.pos[1]);
    }

    #[test]
    fn zero_action_is_identity() {
        let m = builtin("pointmaze15").unwrap();
        let mut rng = stream(0, 3);
        let s = EnvState::at([3.3, 1.7]);
        assert_eq!(m.step(&s, &[0.0, 0.0], &mut rng).pos, s.pos);
    }

    #[test]
    fn discrete_right_from_center() {
        let m = MazeSpec::parse("continuous: false\n---\n...\n...\n...\n", Path::new("x")).unwrap();
        let mut rng = stream(0, 3);
        let s = EnvState::at(Cell::new(1, 1).center());
        let n = m.step(&s, &one_hot(3), &mut rng);
        assert_eq!(n.pos, Cell::new(1, 2).center());
        // Off-grid moves are clipped.
        let edge = EnvState::at(Cell::new(0, 0).center());
        assert_eq!(m.step(&edge, &one_hot(0), &mut rng).pos, edge.pos);
    }

    #[test]
    fn reward_convention() {
        let g = GoalTest { goal: [1.0, 1.0], radius: 0.5 };
        assert_eq!(reward(&[1.0, 1.0], &g), 0.0);
        assert_eq!(reward(&[9.0, 9.0], &g), -1.0);
        assert_eq!(reward(&[1.5, 1.0], &g), 0.0);
    }

    #[test]
    fn teleport_replays_with_seed() {
        let m = builtin("teleport9").unwrap();
        let run = |seed| {
            let mut rng = stream(seed, 3);
            let mut s = EnvState::at([1.5, 4.5]);
            let mut trace = vec![];
            for _ in 0..3 {
                s = m.step(&s, &[1.0, 0.0], &mut rng);
                trace.push(s.pos);
            }
            trace
        };
        assert_eq!(run(5), run(5));
        let exits = [Cell::new(1, 7).center(), Cell::new(7, 1).center()];
        assert!(exits.contains(&run(5)[2]));
    }
}
