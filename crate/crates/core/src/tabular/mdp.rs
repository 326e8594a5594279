//! Deterministic finite goal-conditioned MDPs and exact value iteration.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Cell, MazeSpec};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// State layout of a grid-derived MDP: state `i` sits at `cells[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
}

impl GridLayout {
    /// `(dr, dc)` from state `a` to state `b`.
    pub fn displacement(&self, a: usize, b: usize) -> (isize, isize) {
        let (ca, cb) = (self.cells[a], self.cells[b]);
        (cb.row as isize - ca.row as isize, cb.col as isize - ca.col as isize)
    }
}

/// A deterministic MDP with reward -1 per step and an absorbing,
/// zero-reward goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMDP {
    pub n_states: usize,
    pub n_actions: usize,
    /// `next[s * n_actions + a]`.
    pub next: Vec<usize>,
    pub goals: Vec<usize>,
    pub gamma: f64,
    pub layout: Option<GridLayout>,
}

/// Tolerance for treating two action values as tied.
pub const TIE_TOL: f64 = 1e-9;

impl FiniteMDP {
    pub fn new(n_states: usize, n_actions: usize, next: Vec<usize>, goals: Vec<usize>, gamma: f64) -> Result<Self> {
        let m = Self {
            n_states,
            n_actions,
            next,
            goals,
            gamma,
            layout: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::config("MDP needs at least one state and one action"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} not in [0,1)", self.gamma)));
        }
        if self.next.len() != self.n_states * self.n_actions {
            return Err(Error::shape("transition table has the wrong size"));
        }
        if let Some(&bad) = self.next.iter().find(|&&s| s >= self.n_states) {
            return Err(Error::config(format!("transition into invalid state {bad}")));
        }
        if self.goals.is_empty() || self.goals.iter().any(|&g| g >= self.n_states) {
            return Err(Error::config("goal set must be a non-empty subset of the states"));
        }
        for &g in &self.goals {
            let d = self.distances_to(g);
            if let Some(s) = d.iter().position(Option::is_none) {
                return Err(Error::Unreachable(format!("goal {g} from state {s}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self, s: usize, a: usize) -> usize {
        self.next[s * self.n_actions + a]
    }

    /// Shortest-path step counts to `g` (reverse breadth-first search).
    pub fn distances_to(&self, g: usize) -> Vec<Option<usize>> {
        let mut preds = vec![Vec::new(); self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                preds[self.step(s, a)].push(s);
            }
        }
        let mut dist = vec![None; self.n_states];
        dist[g] = Some(0);
        let mut queue = VecDeque::from([g]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued states have distances");
            for &p in &preds[u] {
                if dist[p].is_none() {
                    dist[p] = Some(du + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    pub fn goal_index(&self, g: usize) -> Option<usize> {
        self.goals.iter().position(|&x| x == g)
    }

    /// Grid MDP over the free cells of a maze: four moves, blocked moves
    /// stay put. Every free cell is a goal.
    pub fn from_maze(maze: &MazeSpec, gamma: f64) -> Result<Self> {
        let cells = maze.free_cells();
        let index = |c: Cell| cells.iter().position(|&x| x == c);
        let mut next = Vec::with_capacity(cells.len() * 4);
        for &c in &cells {
            for a in 0..4 {
                let to = maze.neighbor(c, a).unwrap_or(c);
                next.push(index(to).expect("neighbours are free cells"));
            }
        }
        let n = cells.len();
        let mut m = Self::new(n, 4, next, (0..n).collect(), gamma)?;
        m.layout = Some(GridLayout {
            width: maze.width,
            height: maze.height,
            cells,
        });
        Ok(m)
    }

    /// A random maze with `width * height <= 25`, walls dropped with
    /// probability `wall_p` while keeping every free cell connected.
    pub fn random_grid(width: usize, height: usize, wall_p: f64, gamma: f64, rng: &mut Stream) -> Result<Self> {
        let mut walls = vec![false; width * height];
        let mut order: Vec<usize> = (0..width * height).collect();
        order.shuffle(rng);
        for i in order {
            if rng.random::<f64>() >= wall_p {
                continue;
            }
            walls[i] = true;
            let maze = MazeSpec::from_walls("random", width, height, walls.clone(), false)?;
            if maze.free_cells().len() < 2 || !connected(&maze) {
                walls[i] = false;
            }
        }
        let maze = MazeSpec::from_walls("random", width, height, walls, false)?;
        Self::from_maze(&maze, gamma)
    }

    /// A random strongly connected graph MDP: action 0 follows a random
    /// Hamiltonian cycle, the remaining actions jump to random states.
    pub fn random_graph(n_states: usize, n_actions: usize, n_goals: usize, gamma: f64, rng: &mut Stream) -> Result<Self> {
        if n_states < 2 || n_actions < 1 || n_goals < 1 || n_goals > n_states {
            return Err(Error::config("random graph needs >= 2 states and 1..=|S| goals"));
        }
        let mut cycle: Vec<usize> = (0..n_states).collect();
        cycle.shuffle(rng);
        let mut next = vec![0; n_states * n_actions];
        for i in 0..n_states {
            let s = cycle[i];
            next[s * n_actions] = cycle[(i + 1) % n_states];
            for a in 1..n_actions {
                next[s * n_actions + a] = rng.random_range(0..n_states);
            }
        }
        let mut goals: Vec<usize> = (0..n_states).collect();
        goals.shuffle(rng);
        goals.truncate(n_goals);
        goals.sort_unstable();
        Self::new(n_states, n_actions, next, goals, gamma)
    }
}

fn connected(maze: &MazeSpec) -> bool {
    let free = maze.free_cells();
    let d = maze.distances_to(free[0]);
    free.iter().all(|&c| d[maze.index(c)].is_some())
}

/// Optimal values and greedy policy for goal `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Lowest-index action maximising `values[next(s, a)]`.
pub fn greedy_action(mdp: &FiniteMDP, values: &[f64], s: usize) -> usize {
    let mut best = 0;
    let mut best_v = values[mdp.step(s, 0)];
    for a in 1..mdp.n_actions {
        let v = values[mdp.step(s, a)];
        if v > best_v + TIE_TOL {
            best = a;
            best_v = v;
        }
    }
    best
}

/// Value iteration to a sup-norm residual below 1e-12.
pub fn value_iteration(mdp: &FiniteMDP, g: usize) -> Result<Solution> {
    if g >= mdp.n_states {
        return Err(Error::config(format!("goal {g} is not a state")));
    }
    let dist = mdp.distances_to(g);
    if let Some(s) = dist.iter().position(Option::is_none) {
        return Err(Error::Unreachable(format!("goal {g} from state {s}")));
    }
    let mut v = vec![0.0; mdp.n_states];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut residual: f64 = 0.0;
        let mut nv = vec![0.0; mdp.n_states];
        for s in 0..mdp.n_states {
            if s == g {
                continue;
            }
            let best = (0..mdp.n_actions)
                .map(|a| v[mdp.step(s, a)])
                .fold(f64::NEG_INFINITY, f64::max);
            nv[s] = -1.0 + mdp.gamma * best;
            residual = residual.max((nv[s] - v[s]).abs());
        }
        v = nv;
        if residual < 1e-12 {
            break;
        }
        if iterations > 1_000_000 {
            return Err(Error::Numeric {
                step: iterations,
                detail: "value iteration did not converge".into(),
            });
        }
    }
    let policy = (0..mdp.n_states).map(|s| greedy_action(mdp, &v, s)).collect();
    Ok(Solution {
        values: v,
        policy,
        iterations,
    })
}

/// Length of the greedy path from `s` to `g` (`None` if it loops).
pub fn greedy_path_length(mdp: &FiniteMDP, policy: &[usize], s: usize, g: usize) -> Option<usize> {
    let mut cur = s;
    for k in 0..=mdp.n_states {
        if cur == g {
            return Some(k);
        }
        cur = mdp.step(cur, policy[cur]);
    }
    None
}
