//! Goal and waypoint sampling with reward relabelling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::envs::GoalTest;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor_core::Tensor;

/// Mixture over goal sources for one loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSampleConfig {
    pub p_cur: f64,
    pub p_traj: f64,
    pub p_rand: f64,
    /// Geometric (true) or uniform (false) offsets for the trajectory branch.
    pub geometric: bool,
    pub discount: f64,
}

impl GoalSampleConfig {
    pub fn new(p_cur: f64, p_traj: f64, p_rand: f64, geometric: bool, discount: f64) -> Result<Self> {
        let cfg = Self {
            p_cur,
            p_traj,
            p_rand,
            geometric,
            discount,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_cur, self.p_traj, self.p_rand];
        if ps.iter().any(|p| !(*p >= 0.0)) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "goal ratios {ps:?} must be non-negative and sum to 1"
            )));
        }
        if self.geometric && !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config(format!(
                "geometric goal sampling needs a discount in (0,1), got {}",
                self.discount
            )));
        }
        Ok(())
    }

    /// Generic value ratio (0.2, 0.5, 0.3), uniform offsets.
    pub fn value(gamma: f64) -> Self {
        Self::new(0.2, 0.5, 0.3, false, gamma).expect("valid preset")
    }

    /// Low-level value ratio (0.10, 0.85, 0.05), geometric at `gamma_l`.
    pub fn low_value(gamma_l: f64) -> Self {
        Self::new(0.10, 0.85, 0.05, true, gamma_l).expect("valid preset")
    }

    /// High-level value ratio (0.2, 0.5, 0.3), uniform offsets.
    pub fn high_value(gamma: f64) -> Self {
        Self::new(0.2, 0.5, 0.3, false, gamma).expect("valid preset")
    }

    /// Policy ratio (0.0, 0.5, 0.5), geometric at `gamma`.
    pub fn policy(gamma: f64) -> Self {
        Self::new(0.0, 0.5, 0.5, true, gamma).expect("valid preset")
    }
}

/// Which branch of the mixture produced a goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Current,
    Trajectory,
    Random,
}

/// Step index of the waypoint `n` steps ahead, clamped to the trajectory end.
pub fn waypoint_index(horizon: usize, t: usize, n: usize) -> usize {
    (t + n).min(horizon)
}

/// The state `min(t + n, H)` of trajectory `traj`.
pub fn sample_waypoint(ds: &Dataset, traj: usize, t: usize, n: usize) -> &[f64] {
    ds.state(traj, waypoint_index(ds.horizon, t, n))
}

/// Offset `Δ ∈ {1..k}` with `P(Δ = j) ∝ γ^(j-1)`, drawn by inverting the
/// truncated CDF `(1 - γ^j) / (1 - γ^k)`.
pub fn truncated_geometric(k: usize, gamma: f64, rng: &mut Stream) -> usize {
    debug_assert!(k >= 1);
    let u: f64 = rng.random();
    let total = 1.0 - gamma.powi(k as i32);
    // Smallest j with 1 - γ^j >= u * total.
    let j = ((1.0 - u * total).ln() / gamma.ln()).ceil();
    (j as usize).clamp(1, k)
}

/// A goal drawn for anchor `(traj, t)`: its `(trajectory, step)` location
/// in the dataset and the branch it came from.
pub fn sample_goal(
    ds: &Dataset,
    traj: usize,
    t: usize,
    cfg: &GoalSampleConfig,
    rng: &mut Stream,
) -> ((usize, usize), Provenance) {
    let u: f64 = rng.random();
    if u < cfg.p_cur {
        return ((traj, t), Provenance::Current);
    }
    if u < cfg.p_cur + cfg.p_traj {
        let remaining = ds.horizon - t;
        if remaining == 0 {
            return ((traj, t), Provenance::Trajectory);
        }
        let delta = if cfg.geometric {
            truncated_geometric(remaining, cfg.discount, rng)
        } else {
            rng.random_range(1..=remaining)
        };
        return ((traj, t + delta), Provenance::Trajectory);
    }
    let j = rng.random_range(0..ds.num_states());
    (ds.state_index(j), Provenance::Random)
}

/// Reward of state `s` for goal `g` under the dataset's goal radius.
pub fn relabel_reward(ds: &Dataset, s: &[f64], g: &[f64]) -> f64 {
    crate::envs::reward(
        s,
        &GoalTest {
            goal: [g[0], g[1]],
            radius: ds.goal_radius,
        },
    )
}

/// Rows of `(s, a, s', g_s, g, r)` drawn uniformly with replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledBatch {
    pub s: Tensor,
    pub a: Tensor,
    pub s_next: Tensor,
    pub waypoint: Tensor,
    pub goal: Tensor,
    /// `[rows, 1]` relabelled rewards of `s` for `goal`.
    pub reward: Tensor,
    pub provenance: Vec<Provenance>,
    pub anchors: Vec<(usize, usize)>,
    pub waypoint_steps: Vec<usize>,
    pub goal_locs: Vec<(usize, usize)>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

pub fn sample_batch(
    ds: &Dataset,
    batch_size: usize,
    cfg: &GoalSampleConfig,
    n: usize,
    rng: &mut Stream,
) -> Result<SampledBatch> {
    if batch_size == 0 {
        return Err(Error::usage("batch_size must be at least 1"));
    }
    if ds.is_empty() {
        return Err(Error::usage("cannot sample from an empty dataset"));
    }
    cfg.validate()?;
    let (sd, ad) = (ds.state_dim, ds.action_dim);
    let mut s = Vec::with_capacity(batch_size * sd);
    let mut a = Vec::with_capacity(batch_size * ad);
    let mut s_next = Vec::with_capacity(batch_size * sd);
    let mut waypoint = Vec::with_capacity(batch_size * sd);
    let mut goal = Vec::with_capacity(batch_size * sd);
    let mut reward = Vec::with_capacity(batch_size);
    let mut provenance = Vec::with_capacity(batch_size);
    let mut anchors = Vec::with_capacity(batch_size);
    let mut waypoint_steps = Vec::with_capacity(batch_size);
    let mut goal_locs = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (traj, t) = ds.transition(rng.random_range(0..ds.num_transitions()));
        let w = waypoint_index(ds.horizon, t, n);
        let (loc, tag) = sample_goal(ds, traj, t, cfg, rng);
        let st = ds.state(traj, t);
        let g = ds.state(loc.0, loc.1);
        s.extend_from_slice(st);
        a.extend_from_slice(ds.action(traj, t));
        s_next.extend_from_slice(ds.state(traj, t + 1));
        waypoint.extend_from_slice(ds.state(traj, w));
        goal.extend_from_slice(g);
        reward.push(relabel_reward(ds, st, g));
        provenance.push(tag);
        anchors.push((traj, t));
        waypoint_steps.push(w);
        goal_locs.push(loc);
    }
    Ok(SampledBatch {
        s: Tensor::matrix(batch_size, sd, s)?,
        a: Tensor::matrix(batch_size, ad, a)?,
        s_next: Tensor::matrix(batch_size, sd, s_next)?,
        waypoint: Tensor::matrix(batch_size, sd, waypoint)?,
        goal: Tensor::matrix(batch_size, sd, goal)?,
        reward: Tensor::matrix(batch_size, 1, reward)?,
        provenance,
        anchors,
        waypoint_steps,
        goal_locs,
    })
}
