//! Discounted occupancy measures and concentrability coefficients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mdp::FiniteMDP;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Goal-conditioned stochastic policy `π(a | s, c)`, where the condition
/// `c` indexes the MDP's goal list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_conds: usize,
    /// `probs[(c * n_states + s) * n_actions + a]`.
    pub probs: Vec<f64>,
}

impl Policy {
    pub fn zeros(n_states: usize, n_actions: usize, n_conds: usize) -> Self {
        Self {
            n_states,
            n_actions,
            n_conds,
            probs: vec![0.0; n_states * n_actions * n_conds],
        }
    }

    /// Deterministic policy from `choice[c * n_states + s]`.
    pub fn deterministic(n_states: usize, n_actions: usize, n_conds: usize, choice: &[usize]) -> Self {
        let mut p = Self::zeros(n_states, n_actions, n_conds);
        for (row, &a) in choice.iter().enumerate() {
            p.probs[row * n_actions + a] = 1.0;
        }
        p
    }

    pub fn row(&self, c: usize, s: usize) -> &[f64] {
        let i = (c * self.n_states + s) * self.n_actions;
        &self.probs[i..i + self.n_actions]
    }

    pub fn row_mut(&mut self, c: usize, s: usize) -> &mut [f64] {
        let i = (c * self.n_states + s) * self.n_actions;
        &mut self.probs[i..i + self.n_actions]
    }

    /// `(1 - eps) * self + eps * uniform`.
    pub fn mix_uniform(&self, eps: f64) -> Self {
        let u = 1.0 / self.n_actions as f64;
        let mut out = self.clone();
        for p in &mut out.probs {
            *p = (1.0 - eps) * *p + eps * u;
        }
        out
    }

    fn check(&self, mdp: &FiniteMDP) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions || self.n_conds != mdp.goals.len() {
            return Err(Error::shape(format!(
                "policy is {}x{}x{}, MDP is {}x{}x{}",
                self.n_states,
                self.n_actions,
                self.n_conds,
                mdp.n_states,
                mdp.n_actions,
                mdp.goals.len()
            )));
        }
        for c in 0..self.n_conds {
            for s in 0..self.n_states {
                let r = self.row(c, s);
                let total: f64 = r.iter().sum();
                if r.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("policy row (s={s}, g={}) is not a distribution", mdp.goals[c])));
                }
            }
        }
        Ok(())
    }
}

/// Per-goal conditional occupancy `d(s, a | g)`; each goal slice sums to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_conds: usize,
    /// The `(1 - γ)` normalisation constant.
    pub norm: f64,
    /// `d[(c * n_states + s) * n_actions + a]`.
    pub d: Vec<f64>,
}

impl OccupancyTable {
    #[inline]
    pub fn get(&self, s: usize, a: usize, c: usize) -> f64 {
        self.d[(c * self.n_states + s) * self.n_actions + a]
    }

    /// Index `[s, a, c]` of a flat position.
    pub fn unflatten(&self, i: usize) -> [usize; 3] {
        let a = i % self.n_actions;
        let row = i / self.n_actions;
        [row % self.n_states, a, row / self.n_states]
    }

    pub fn goal_mass(&self, c: usize) -> f64 {
        let w = self.n_states * self.n_actions;
        self.d[c * w..(c + 1) * w].iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.d
            .iter()
            .zip(&other.d)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Uniform start distribution for every condition.
pub fn uniform_init(mdp: &FiniteMDP) -> Vec<Vec<f64>> {
    vec![vec![1.0 / mdp.n_states as f64; mdp.n_states]; mdp.goals.len()]
}

fn check_init(mdp: &FiniteMDP, init: &[Vec<f64>]) -> Result<()> {
    if init.len() != mdp.goals.len() || init.iter().any(|v| v.len() != mdp.n_states) {
        return Err(Error::shape("one start distribution per goal is required"));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config(format!("occupancy discount {gamma} not in [0,1)")));
    }
    Ok(())
}

/// State transition matrix `P[s', s]` under `policy` for condition `c`,
/// with the goal absorbing.
fn transition_matrix(mdp: &FiniteMDP, policy: &Policy, c: usize) -> DMatrix<f64> {
    let n = mdp.n_states;
    let g = mdp.goals[c];
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        if s == g {
            p[(g, g)] = 1.0;
            continue;
        }
        for (a, &pa) in policy.row(c, s).iter().enumerate() {
            p[(mdp.step(s, a), s)] += pa;
        }
    }
    p
}

fn expand(mdp: &FiniteMDP, policy: &Policy, gamma: f64, rho: &[Vec<f64>]) -> OccupancyTable {
    let mut d = Vec::with_capacity(policy.probs.len());
    for (c, rc) in rho.iter().enumerate() {
        for (s, &r) in rc.iter().enumerate() {
            d.extend(policy.row(c, s).iter().map(|&p| r * p));
        }
    }
    OccupancyTable {
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        n_conds: mdp.goals.len(),
        norm: 1.0 - gamma,
        d,
    }
}

/// Exact occupancy from a uniform start: solves
/// `(I - γ P) ρ = (1 - γ) μ0` per goal by LU.
pub fn occupancy(mdp: &FiniteMDP, policy: &Policy, gamma: f64) -> Result<OccupancyTable> {
    occupancy_from(mdp, policy, gamma, &uniform_init(mdp))
}

/// As [`occupancy`] with one start distribution per goal.
pub fn occupancy_from(mdp: &FiniteMDP, policy: &Policy, gamma: f64, init: &[Vec<f64>]) -> Result<OccupancyTable> {
    check_gamma(gamma)?;
    policy.check(mdp)?;
    check_init(mdp, init)?;
    let n = mdp.n_states;
    let mut rho = Vec::with_capacity(mdp.goals.len());
    for (c, mu) in init.iter().enumerate() {
        let a = DMatrix::identity(n, n) - transition_matrix(mdp, policy, c) * gamma;
        let b = DVector::from_iterator(n, mu.iter().map(|&m| (1.0 - gamma) * m));
        let x = a.lu().solve(&b).ok_or_else(|| Error::Numeric {
            step: 0,
            detail: format!("singular occupancy system for goal {}", mdp.goals[c]),
        })?;
        rho.push(x.iter().map(|&v| v.max(0.0)).collect());
    }
    Ok(expand(mdp, policy, gamma, &rho))
}

/// Truncated series `(1 - γ) Σ_t γ^t μ_t`, summed until `γ^t < 1e-12`.
pub fn series_occupancy(mdp: &FiniteMDP, policy: &Policy, gamma: f64, init: &[Vec<f64>]) -> Result<OccupancyTable> {
    check_gamma(gamma)?;
    policy.check(mdp)?;
    check_init(mdp, init)?;
    let mut rho = Vec::with_capacity(mdp.goals.len());
    for (c, mu) in init.iter().enumerate() {
        let p = transition_matrix(mdp, policy, c);
        let mut cur = DVector::from_column_slice(mu);
        let mut acc = DVector::zeros(mdp.n_states);
        let mut w = 1.0 - gamma;
        let mut discount = 1.0;
        while discount >= 1e-12 {
            acc += &cur * w;
            cur = &p * cur;
            w *= gamma;
            discount *= gamma;
        }
        rho.push(acc.iter().copied().collect());
    }
    Ok(expand(mdp, policy, gamma, &rho))
}

fn sample_index(probs: &[f64], rng: &mut Stream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Monte-Carlo estimate from a uniform start: each sample draws a goal,
/// a start, a geometric time `T` with `P(T = t) = (1 - γ) γ^t`, rolls `T`
/// steps and records `(s_T, a_T)`. Goal slices are normalised by their
/// sample counts.
pub fn monte_carlo_occupancy(mdp: &FiniteMDP, policy: &Policy, gamma: f64, samples: usize, rng: &mut Stream) -> Result<OccupancyTable> {
    check_gamma(gamma)?;
    policy.check(mdp)?;
    let (n, na, ng) = (mdp.n_states, mdp.n_actions, mdp.goals.len());
    let mut counts = vec![0usize; n * na * ng];
    let mut per_goal = vec![0usize; ng];
    for _ in 0..samples {
        let c = rng.random_range(0..ng);
        let g = mdp.goals[c];
        let mut s = rng.random_range(0..n);
        while s != g && rng.random::<f64>() < gamma {
            s = mdp.step(s, sample_index(policy.row(c, s), rng));
        }
        let a = sample_index(policy.row(c, s), rng);
        counts[(c * n + s) * na + a] += 1;
        per_goal[c] += 1;
    }
    let d = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let c = i / (n * na);
            if per_goal[c] == 0 {
                0.0
            } else {
                k as f64 / per_goal[c] as f64
            }
        })
        .collect();
    Ok(OccupancyTable {
        n_states: n,
        n_actions: na,
        n_conds: ng,
        norm: 1.0 - gamma,
        d,
    })
}

/// Where a concentrability supremum is attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub index: Vec<usize>,
    pub d_star: f64,
    pub d_bc: f64,
}

/// `sup d* / d_bc` over entries with `d* > 0`; infinite on support
/// mismatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    #[serde(with = "extended_f64")]
    pub value: f64,
    pub witness: Option<Witness>,
}

impl Kappa {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

/// Concentrability over two flat tables on the same index space. The
/// witness stores the flat position.
pub fn concentrability_flat(d_star: &[f64], d_bc: &[f64]) -> Result<(f64, Option<usize>)> {
    if d_star.len() != d_bc.len() {
        return Err(Error::shape("concentrability tables differ in size"));
    }
    let mut best = 0.0;
    let mut at = None;
    for (i, (&a, &b)) in d_star.iter().zip(d_bc).enumerate() {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return Ok((f64::INFINITY, Some(i)));
        }
        let r = a / b;
        if at.is_none() || r > best {
            best = r;
            at = Some(i);
        }
    }
    Ok((best, at))
}

pub fn concentrability(d_star: &OccupancyTable, d_bc: &OccupancyTable) -> Result<Kappa> {
    if (d_star.n_states, d_star.n_actions, d_star.n_conds) != (d_bc.n_states, d_bc.n_actions, d_bc.n_conds) {
        return Err(Error::shape("occupancy tables live on different index spaces"));
    }
    let (value, at) = concentrability_flat(&d_star.d, &d_bc.d)?;
    Ok(Kappa {
        value,
        witness: at.map(|i| Witness {
            index: d_star.unflatten(i).to_vec(),
            d_star: d_star.d[i],
            d_bc: d_bc.d[i],
        }),
    })
}

/// Serialises non-finite reals as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad real {other:?}"))),
            },
        }
    }
}
