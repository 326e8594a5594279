//! The offline dataset container and its file formats.
//!
//! Binary layout (little endian): magic `ARLD`, version byte, env id
//! (u32 length + UTF-8), trajectory count N (u64), horizon H (u64), state
//! and action widths (u32 each), goal radius (f64), then every state
//! (N x (H+1) x state_dim) followed by every action (N x H x action_dim).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ARLD";
pub const DATASET_VERSION: u8 = 1;

/// Trajectories of a fixed horizon stored as flat row-major arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env_id: String,
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Radius of the environment goal test used for reward relabelling.
    pub goal_radius: f64,
    states: Vec<f64>,
    actions: Vec<f64>,
    trajectories: usize,
}

/// Borrowed view of one trajectory.
#[derive(Clone, Copy, Debug)]
pub struct Trajectory<'a> {
    pub states: &'a [f64],
    pub actions: &'a [f64],
    state_dim: usize,
    action_dim: usize,
}

impl<'a> Trajectory<'a> {
    pub fn len(&self) -> usize {
        self.actions.len() / self.action_dim
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state(&self, t: usize) -> &'a [f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &'a [f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }
}

impl Dataset {
    pub fn new(env_id: &str, horizon: usize, state_dim: usize, action_dim: usize, goal_radius: f64) -> Result<Self> {
        if horizon == 0 || state_dim == 0 || action_dim == 0 {
            return Err(Error::usage("dataset needs H >= 1 and non-empty state/action widths"));
        }
        Ok(Self {
            env_id: env_id.to_string(),
            horizon,
            state_dim,
            action_dim,
            goal_radius,
            states: Vec::new(),
            actions: Vec::new(),
            trajectories: 0,
        })
    }

    /// Appends a trajectory of `H + 1` states and `H` actions.
    pub fn push(&mut self, states: &[f64], actions: &[f64]) -> Result<()> {
        if states.len() != (self.horizon + 1) * self.state_dim
            || actions.len() != self.horizon * self.action_dim
        {
            return Err(Error::shape(format!(
                "trajectory needs {} state and {} action values, got {} and {}",
                (self.horizon + 1) * self.state_dim,
                self.horizon * self.action_dim,
                states.len(),
                actions.len()
            )));
        }
        self.states.extend_from_slice(states);
        self.actions.extend_from_slice(actions);
        self.trajectories += 1;
        Ok(())
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories * self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.trajectories * (self.horizon + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories == 0
    }

    pub fn trajectory(&self, i: usize) -> Trajectory<'_> {
        let (hs, ha) = ((self.horizon + 1) * self.state_dim, self.horizon * self.action_dim);
        Trajectory {
            states: &self.states[i * hs..(i + 1) * hs],
            actions: &self.actions[i * ha..(i + 1) * ha],
            state_dim: self.state_dim,
            action_dim: self.action_dim,
        }
    }

    pub fn state(&self, traj: usize, t: usize) -> &[f64] {
        let base = (traj * (self.horizon + 1) + t) * self.state_dim;
        &self.states[base..base + self.state_dim]
    }

    pub fn action(&self, traj: usize, t: usize) -> &[f64] {
        let base = (traj * self.horizon + t) * self.action_dim;
        &self.actions[base..base + self.action_dim]
    }

    /// `(trajectory, step)` of flat transition index `i`.
    pub fn transition(&self, i: usize) -> (usize, usize) {
        (i / self.horizon, i % self.horizon)
    }

    /// `(trajectory, step)` of flat state index `j` (steps run to `H`).
    pub fn state_index(&self, j: usize) -> (usize, usize) {
        (j / (self.horizon + 1), j % (self.horizon + 1))
    }

    pub fn all_states(&self) -> &[f64] {
        &self.states
    }

    pub fn all_actions(&self) -> &[f64] {
        &self.actions
    }

    /// Every state shifted by `offset` (used to build translated copies).
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.state_dim {
            return Err(Error::shape("translation width differs from state width"));
        }
        let mut out = self.clone();
        for row in out.states.chunks_exact_mut(self.state_dim) {
            row.iter_mut().zip(offset).for_each(|(v, o)| *v += o);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.states.len() + self.actions.len()));
        out.extend_from_slice(MAGIC);
        out.push(DATASET_VERSION);
        out.extend_from_slice(&(self.env_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.env_id.as_bytes());
        out.extend_from_slice(&(self.trajectories as u64).to_le_bytes());
        out.extend_from_slice(&(self.horizon as u64).to_le_bytes());
        out.extend_from_slice(&(self.state_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.goal_radius.to_le_bytes());
        for v in self.states.iter().chain(&self.actions) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |d: &str| Error::format(path, d.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(bad("truncated dataset"));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = take(1)?[0];
        if version != DATASET_VERSION {
            return Err(bad(&format!("unsupported dataset version {version}")));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
        let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes")) as usize;
        let id_len = u32_at(take(4)?);
        let env_id = String::from_utf8(take(id_len)?.to_vec()).map_err(|_| bad("env id is not UTF-8"))?;
        let n = u64_at(take(8)?);
        let horizon = u64_at(take(8)?);
        let state_dim = u32_at(take(4)?);
        let action_dim = u32_at(take(4)?);
        let goal_radius = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let ns = n
            .checked_mul(horizon + 1)
            .and_then(|v| v.checked_mul(state_dim))
            .ok_or_else(|| bad("size overflow"))?;
        let na = n
            .checked_mul(horizon)
            .and_then(|v| v.checked_mul(action_dim))
            .ok_or_else(|| bad("size overflow"))?;
        let body = take((ns + na).checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let states: Vec<f64> = values.by_ref().take(ns).collect();
        let actions: Vec<f64> = values.collect();
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let mut ds = Self::new(&env_id, horizon, state_dim, action_dim, goal_radius)
            .map_err(|e| Error::format(path, e.to_string()))?;
        ds.states = states;
        ds.actions = actions;
        ds.trajectories = n;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }

    /// One row per state: trajectory, step, state components, then the
    /// action taken from it (empty on the final state).
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        write!(out, "traj,t")?;
        for i in 0..self.state_dim {
            write!(out, ",s{i}")?;
        }
        for i in 0..self.action_dim {
            write!(out, ",a{i}")?;
        }
        writeln!(out)?;
        for traj in 0..self.trajectories {
            for t in 0..=self.horizon {
                write!(out, "{traj},{t}")?;
                for v in self.state(traj, t) {
                    write!(out, ",{v}")?;
                }
                if t < self.horizon {
                    for v in self.action(traj, t) {
                        write!(out, ",{v}")?;
                    }
                } else {
                    for _ in 0..self.action_dim {
                        write!(out, ",")?;
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}
