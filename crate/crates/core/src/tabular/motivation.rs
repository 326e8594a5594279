//! Hierarchical lifts, behaviour policies and the numerical check of the
//! hierarchy/abstraction inequalities.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::abstraction::{aggregate_partition, aggregated_concentrability, AbstractionMap, Partition};
use super::mdp::{value_iteration, FiniteMDP, Solution, TIE_TOL};
use super::occupancy::{concentrability, extended_f64, occupancy, occupancy_from, Kappa, OccupancyTable, Policy};
use crate::envs::MazeSpec;
use crate::error::{Error, Result};

/// Behaviour policies used as the data-collecting `π^BC`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Behaviour {
    /// `(1 - eps) π* + eps · uniform`.
    Epsilon { eps: f64 },
    /// Optimal on `expert` states, uniform over suboptimal actions
    /// elsewhere.
    RegionMasked { expert: Vec<bool> },
}

/// Optimal solutions toward every state, used both for goals and for
/// waypoint options.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub solutions: Vec<Solution>,
    pub distances: Vec<Vec<usize>>,
}

impl Oracle {
    pub fn new(mdp: &FiniteMDP) -> Result<Self> {
        let mut solutions = Vec::with_capacity(mdp.n_states);
        let mut distances = Vec::with_capacity(mdp.n_states);
        for t in 0..mdp.n_states {
            solutions.push(value_iteration(mdp, t)?);
            let d = mdp.distances_to(t);
            distances.push(d.into_iter().map(|x| x.expect("value iteration checked reachability")).collect());
        }
        Ok(Self { solutions, distances })
    }

    pub fn action(&self, t: usize, s: usize) -> usize {
        self.solutions[t].policy[s]
    }

    /// Actions optimal at `s` toward `t`; every action at `s == t`.
    pub fn optimal_actions(&self, mdp: &FiniteMDP, t: usize, s: usize) -> Vec<bool> {
        if s == t {
            return vec![true; mdp.n_actions];
        }
        let v = &self.solutions[t].values;
        let best = (0..mdp.n_actions).map(|a| v[mdp.step(s, a)]).fold(f64::NEG_INFINITY, f64::max);
        (0..mdp.n_actions).map(|a| v[mdp.step(s, a)] >= best - TIE_TOL).collect()
    }

    /// State after at most `n` optimal steps from `s` toward `t`.
    pub fn roll(&self, mdp: &FiniteMDP, s: usize, t: usize, n: usize) -> usize {
        let mut cur = s;
        for _ in 0..n {
            if cur == t {
                break;
            }
            cur = mdp.step(cur, self.action(t, cur));
        }
        cur
    }

    pub fn behaviour_row(&self, mdp: &FiniteMDP, behaviour: &Behaviour, t: usize, s: usize) -> Vec<f64> {
        let mut row = vec![0.0; mdp.n_actions];
        let best = self.action(t, s);
        match behaviour {
            Behaviour::Epsilon { eps } => {
                let u = eps / mdp.n_actions as f64;
                row.iter_mut().for_each(|p| *p = u);
                row[best] += 1.0 - eps;
            }
            Behaviour::RegionMasked { expert } => {
                if expert[s] {
                    row[best] = 1.0;
                } else {
                    let opt = self.optimal_actions(mdp, t, s);
                    let bad: Vec<usize> = (0..mdp.n_actions).filter(|&a| !opt[a]).collect();
                    if bad.is_empty() {
                        row.iter_mut().for_each(|p| *p = 1.0 / mdp.n_actions as f64);
                    } else {
                        for &a in &bad {
                            row[a] = 1.0 / bad.len() as f64;
                        }
                    }
                }
            }
        }
        row
    }
}

fn check_behaviour(mdp: &FiniteMDP, behaviour: &Behaviour) -> Result<()> {
    match behaviour {
        Behaviour::Epsilon { eps } if !(0.0..=1.0).contains(eps) => {
            Err(Error::config(format!("epsilon {eps} not in [0,1]")))
        }
        Behaviour::RegionMasked { expert } if expert.len() != mdp.n_states => {
            Err(Error::shape("expert mask must cover every state"))
        }
        _ => Ok(()),
    }
}

/// The two-level structure for a given option horizon `n`: waypoint
/// options `Ω = S`, a low level that reaches waypoints, and the semi-MDP
/// whose option `ω` jumps `n` low-level optimal steps toward `ω`.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub n: usize,
    pub oracle: Oracle,
    /// `lift[s * |S| + ω]`.
    pub lift: Vec<usize>,
    /// High-level MDP (actions are options) over the original goal set.
    pub high: FiniteMDP,
    /// Low-level MDP conditioned on every waypoint.
    pub low: FiniteMDP,
}

impl Hierarchy {
    pub fn new(mdp: &FiniteMDP, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("option horizon n must be at least 1"));
        }
        let oracle = Oracle::new(mdp)?;
        let s_count = mdp.n_states;
        let mut lift = vec![0; s_count * s_count];
        for s in 0..s_count {
            for w in 0..s_count {
                lift[s * s_count + w] = oracle.roll(mdp, s, w, n);
            }
        }
        let high = FiniteMDP::new(s_count, s_count, lift.clone(), mdp.goals.clone(), mdp.gamma.powi(n as i32))?;
        let low = FiniteMDP::new(s_count, mdp.n_actions, mdp.next.clone(), (0..s_count).collect(), gamma_low(n))?;
        Ok(Self {
            n,
            oracle,
            lift,
            high,
            low,
        })
    }

    pub fn n_options(&self) -> usize {
        self.high.n_actions
    }

    /// Options optimal at `(s, g)`: the ones landing on a state as close
    /// to `g` as the `n`-step optimal waypoint.
    pub fn optimal_options(&self, mdp: &FiniteMDP, s: usize, g: usize) -> Vec<bool> {
        let k = mdp.n_states;
        if s == g {
            return vec![true; k];
        }
        let v = &self.oracle.solutions[g].values;
        let best = v[self.lift[s * k + g]];
        (0..k).map(|w| v[self.lift[s * k + w]] >= best - TIE_TOL).collect()
    }
}

/// Low-level discount `1 - 1/n`.
pub fn gamma_low(n: usize) -> f64 {
    1.0 - 1.0 / n as f64
}

/// Low-level episodes toward `ω` start uniformly within `n` steps of it.
fn low_init(h: &Hierarchy) -> Vec<Vec<f64>> {
    let k = h.low.n_states;
    (0..k)
        .map(|w| {
            let near: Vec<bool> = (0..k).map(|s| h.oracle.distances[w][s] <= h.n).collect();
            let m = near.iter().filter(|&&b| b).count() as f64;
            near.iter().map(|&b| if b { 1.0 / m } else { 0.0 }).collect()
        })
        .collect()
}

/// Optimal and behaviour policies at the flat, high and low levels.
struct Policies {
    flat_star: Policy,
    flat_bc: Policy,
    high_star: Policy,
    high_bc: Policy,
    low_star: Policy,
    low_bc: Policy,
}

fn build_policies(mdp: &FiniteMDP, h: &Hierarchy, behaviour: &Behaviour) -> Policies {
    let (ns, na, ng) = (mdp.n_states, mdp.n_actions, mdp.goals.len());
    let o = &h.oracle;
    let mut flat_star = Policy::zeros(ns, na, ng);
    let mut flat_bc = Policy::zeros(ns, na, ng);
    let mut high_star = Policy::zeros(ns, ns, ng);
    let mut high_bc = Policy::zeros(ns, ns, ng);
    for (c, &g) in mdp.goals.iter().enumerate() {
        let bc_rows: Vec<Vec<f64>> = (0..ns).map(|s| o.behaviour_row(mdp, behaviour, g, s)).collect();
        for s in 0..ns {
            flat_star.row_mut(c, s)[o.action(g, s)] = 1.0;
            flat_bc.row_mut(c, s).copy_from_slice(&bc_rows[s]);
            high_star.row_mut(c, s)[h.lift[s * ns + g]] = 1.0;
            // Waypoint distribution: where n behaviour steps end up.
            let mut dist = vec![0.0; ns];
            dist[s] = 1.0;
            for _ in 0..h.n {
                let mut nd = vec![0.0; ns];
                for (x, &px) in dist.iter().enumerate() {
                    if px == 0.0 {
                        continue;
                    }
                    if x == g {
                        nd[x] += px;
                        continue;
                    }
                    for (a, &pa) in bc_rows[x].iter().enumerate() {
                        nd[mdp.step(x, a)] += px * pa;
                    }
                }
                dist = nd;
            }
            high_bc.row_mut(c, s).copy_from_slice(&dist);
        }
    }
    let mut low_star = Policy::zeros(ns, na, ns);
    let mut low_bc = Policy::zeros(ns, na, ns);
    for w in 0..ns {
        for s in 0..ns {
            low_star.row_mut(w, s)[o.action(w, s)] = 1.0;
            low_bc.row_mut(w, s).copy_from_slice(&o.behaviour_row(mdp, behaviour, w, s));
        }
    }
    Policies {
        flat_star,
        flat_bc,
        high_star,
        high_bc,
        low_star,
        low_bc,
    }
}

/// Checks that each class shares at least one optimal choice.
fn check_equivalence(p: &Partition, label: &str, rows_conds: &[usize], optimal: impl Fn(usize, usize) -> Vec<bool>, n_states: usize) -> Result<()> {
    for members in p.members() {
        let Some(&first) = members.first() else { continue };
        let split = |row: usize| (row % n_states, rows_conds[row / n_states]);
        let (s0, c0) = split(first);
        let mut shared = optimal(s0, c0);
        for &row in &members[1..] {
            let (s, c) = split(row);
            let opt = optimal(s, c);
            shared.iter_mut().zip(&opt).for_each(|(a, b)| *a &= *b);
            if !shared.iter().any(|&x| x) {
                return Err(Error::config(format!(
                    "{label} abstraction breaks optimal-policy equivalence: ({s0}, {c0}) and ({s}, {c}) share class {} but no optimal choice",
                    p.classes[first]
                )));
            }
        }
    }
    Ok(())
}

/// Which inequalities held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub horizon: bool,
    pub cardinality: bool,
    pub options: bool,
    pub kappa_high: bool,
    pub kappa_low: bool,
}

impl Checks {
    pub fn all(&self) -> bool {
        self.horizon && self.cardinality && self.options && self.kappa_high && self.kappa_low
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotivationReport {
    pub n: usize,
    pub gamma: f64,
    pub gamma_h: f64,
    pub gamma_l: f64,
    /// `1 / (1 - γ)^3`.
    pub horizon_flat: f64,
    /// `1 / (1 - γ^n)^3`.
    pub horizon_high: f64,
    pub states: usize,
    pub actions: usize,
    pub goals: usize,
    pub options: usize,
    pub classes_high: usize,
    pub classes_low: usize,
    pub options_abs: usize,
    pub options_rel: usize,
    pub kappa: Kappa,
    pub kappa_h: Kappa,
    pub kappa_h_rep: Kappa,
    pub kappa_l: Kappa,
    pub kappa_l_rep: Kappa,
    #[serde(with = "extended_f64")]
    pub eps_flat: f64,
    #[serde(with = "extended_f64")]
    pub eps_hier: f64,
    #[serde(with = "extended_f64")]
    pub eps_rep: f64,
    /// NaN when both terms are infinite.
    #[serde(with = "extended_f64")]
    pub ratio_hier_flat: f64,
    #[serde(with = "extended_f64")]
    pub ratio_rep_flat: f64,
    #[serde(with = "extended_f64")]
    pub ratio_rep_hier: f64,
    pub checks: Checks,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a.is_infinite() && b.is_infinite() {
        f64::NAN
    } else {
        a / b
    }
}

/// `κ^rep ≤ κ`, allowing one part in 1e12 for summation rounding.
pub fn kappa_le(rep: &Kappa, full: &Kappa) -> bool {
    full.is_infinite() || rep.value <= full.value * (1.0 + 1e-12)
}

/// Options anchored at their start state (`(s, w)` with `w` within `n`
/// steps) and their relativised images: displacements on grids, optimal
/// action sequences otherwise.
pub fn option_counts(mdp: &FiniteMDP, oracle: &Oracle, n: usize) -> (usize, usize) {
    let mut absolute = 0;
    let mut relative: BTreeSet<Vec<isize>> = BTreeSet::new();
    for s in 0..mdp.n_states {
        for w in 0..mdp.n_states {
            if oracle.distances[w][s] > n {
                continue;
            }
            absolute += 1;
            let key = match &mdp.layout {
                Some(l) => {
                    let (dr, dc) = l.displacement(s, w);
                    vec![dr, dc]
                }
                None => {
                    let mut seq = Vec::new();
                    let mut cur = s;
                    while cur != w {
                        let a = oracle.action(w, cur);
                        seq.push(a as isize);
                        cur = mdp.step(cur, a);
                    }
                    seq
                }
            };
            relative.insert(key);
        }
    }
    (absolute, relative.len())
}

fn tables(mdp: &FiniteMDP, h: &Hierarchy, p: &Policies) -> Result<[OccupancyTable; 6]> {
    let init = low_init(h);
    Ok([
        occupancy(mdp, &p.flat_star, mdp.gamma)?,
        occupancy(mdp, &p.flat_bc, mdp.gamma)?,
        occupancy(&h.high, &p.high_star, h.high.gamma)?,
        occupancy(&h.high, &p.high_bc, h.high.gamma)?,
        occupancy_from(&h.low, &p.low_star, h.low.gamma, &init)?,
        occupancy_from(&h.low, &p.low_bc, h.low.gamma, &init)?,
    ])
}

/// Computes every coefficient and term and checks the four inequalities.
/// `map` must respect optimal-policy equivalence at both levels.
pub fn verify_motivation_box(mdp: &FiniteMDP, behaviour: &Behaviour, map: &AbstractionMap, n: usize) -> Result<MotivationReport> {
    mdp.validate()?;
    check_behaviour(mdp, behaviour)?;
    let h = Hierarchy::new(mdp, n)?;
    let ns = mdp.n_states;
    let ng = mdp.goals.len();
    if map.high.classes.len() != ns * ng || map.low.classes.len() != ns * ns {
        return Err(Error::shape(format!(
            "abstraction covers {}/{} rows, expected {}/{}",
            map.high.classes.len(),
            map.low.classes.len(),
            ns * ng,
            ns * ns
        )));
    }
    map.high.validate()?;
    map.low.validate()?;
    let all_states: Vec<usize> = (0..ns).collect();
    check_equivalence(&map.high, "high-level", &mdp.goals, |s, g| h.optimal_options(mdp, s, g), ns)?;
    check_equivalence(&map.low, "low-level", &all_states, |s, w| h.oracle.optimal_actions(mdp, w, s), ns)?;

    let pol = build_policies(mdp, &h, behaviour);
    let [flat_star, flat_bc, high_star, high_bc, low_star, low_bc] = tables(mdp, &h, &pol)?;
    let kappa = concentrability(&flat_star, &flat_bc)?;
    let kappa_h = concentrability(&high_star, &high_bc)?;
    let kappa_l = concentrability(&low_star, &low_bc)?;
    let kappa_h_rep = aggregated_concentrability(
        &aggregate_partition(&high_star, &map.high)?,
        &aggregate_partition(&high_bc, &map.high)?,
    )?;
    let kappa_l_rep = aggregated_concentrability(
        &aggregate_partition(&low_star, &map.low)?,
        &aggregate_partition(&low_bc, &map.low)?,
    )?;

    let gamma = mdp.gamma;
    let gamma_h = h.high.gamma;
    let horizon_flat = (1.0 - gamma).powi(-3);
    let horizon_high = (1.0 - gamma_h).powi(-3);
    let (s, a, g, w) = (ns as f64, mdp.n_actions as f64, ng as f64, h.n_options() as f64);
    let n3 = (n as f64).powi(3);
    let (ch, cl) = (map.high.n_classes as f64, map.low.n_classes as f64);
    let eps_flat = (s * g * a * kappa.value * horizon_flat).sqrt();
    let eps_hier = (s * g * w * kappa_h.value * horizon_high).sqrt() + (s * w * a * n3 * kappa_l.value).sqrt();
    let eps_rep = (ch * w * kappa_h_rep.value * horizon_high).sqrt() + (cl * a * n3 * kappa_l_rep.value).sqrt();
    let (options_abs, options_rel) = option_counts(mdp, &h.oracle, n);

    let checks = Checks {
        horizon: horizon_high <= horizon_flat,
        cardinality: map.high.n_classes <= ns * ng && map.low.n_classes <= ns * h.n_options(),
        options: options_rel <= options_abs,
        kappa_high: kappa_le(&kappa_h_rep, &kappa_h),
        kappa_low: kappa_le(&kappa_l_rep, &kappa_l),
    };
    Ok(MotivationReport {
        n,
        gamma,
        gamma_h,
        gamma_l: h.low.gamma,
        horizon_flat,
        horizon_high,
        states: ns,
        actions: mdp.n_actions,
        goals: ng,
        options: h.n_options(),
        classes_high: map.high.n_classes,
        classes_low: map.low.n_classes,
        options_abs,
        options_rel,
        kappa,
        kappa_h,
        kappa_h_rep,
        kappa_l,
        kappa_l_rep,
        eps_flat,
        eps_hier,
        eps_rep,
        ratio_hier_flat: ratio(eps_hier, eps_flat),
        ratio_rep_flat: ratio(eps_rep, eps_flat),
        ratio_rep_hier: ratio(eps_rep, eps_hier),
        checks,
    })
}

/// Every `(s, g)` and `(s, ω)` in its own class.
pub fn identity_map(mdp: &FiniteMDP) -> AbstractionMap {
    AbstractionMap {
        high: Partition::identity(mdp.n_states * mdp.goals.len()),
        low: Partition::identity(mdp.n_states * mdp.n_states),
    }
}

/// The coarsest map that groups pairs by their optimal option and action.
pub fn coarsest_map(mdp: &FiniteMDP, h: &Hierarchy) -> AbstractionMap {
    let ns = mdp.n_states;
    let high: Vec<usize> = mdp
        .goals
        .iter()
        .flat_map(|&g| (0..ns).map(move |s| (s, g)))
        .map(|(s, g)| h.lift[s * ns + g])
        .collect();
    let low: Vec<usize> = (0..ns)
        .flat_map(|w| (0..ns).map(move |s| (s, w)))
        .map(|(s, w)| h.oracle.action(w, s))
        .collect();
    AbstractionMap {
        high: Partition::from_keys(&high),
        low: Partition::from_keys(&low),
    }
}

/// Grid-only: adjacent and coincident `(s, ω)` pairs grouped by the
/// displacement `ω - s`; all other pairs, and the high level, stay
/// distinct.
pub fn displacement_map(mdp: &FiniteMDP) -> Result<AbstractionMap> {
    let layout = mdp
        .layout
        .as_ref()
        .ok_or_else(|| Error::Unsupported("displacement abstraction needs a grid layout".into()))?;
    let ns = mdp.n_states;
    let mut keys = Vec::with_capacity(ns * ns);
    for w in 0..ns {
        for s in 0..ns {
            let (dr, dc) = layout.displacement(s, w);
            let key = if dr.abs() + dc.abs() <= 1 {
                (0, dr, dc)
            } else {
                (1, (w * ns + s) as isize, 0)
            };
            keys.push(key);
        }
    }
    Ok(AbstractionMap {
        high: Partition::identity(ns * mdp.goals.len()),
        low: Partition::from_keys(&keys),
    })
}

/// Four identical `room x room` rooms in a 2x2 layout, separated by
/// one-cell walls with a door in each wall.
pub fn four_rooms(room: usize) -> Result<MazeSpec> {
    if room < 2 {
        return Err(Error::config("rooms must be at least 2x2"));
    }
    let side = 2 * room + 1;
    let mut walls = vec![false; side * side];
    for i in 0..side {
        walls[room * side + i] = true;
        walls[i * side + room] = true;
    }
    let mid = room / 2;
    for door in [
        (mid, room),
        (room + 1 + mid, room),
        (room, mid),
        (room, room + 1 + mid),
    ] {
        walls[door.0 * side + door.1] = false;
    }
    MazeSpec::from_walls("four-rooms", side, side, walls, false)
}

/// States of the top-left room of [`four_rooms`].
pub fn first_room_mask(mdp: &FiniteMDP, room: usize) -> Result<Vec<bool>> {
    let layout = mdp
        .layout
        .as_ref()
        .ok_or_else(|| Error::Unsupported("room masks need a grid layout".into()))?;
    Ok(layout.cells.iter().map(|c| c.row < room && c.col < room).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_factor_uses_powered_discount() {
        let g: f64 = 0.99;
        let gh = g.powi(25);
        assert!((gh - 0.777_821_359_399_146_8).abs() < 1e-12);
        assert!((1.0 - gh).powi(-3) < (1.0 - g).powi(-3));
    }

    #[test]
    fn low_discount() {
        assert_eq!(gamma_low(1), 0.0);
        assert_eq!(gamma_low(4), 0.75);
    }

    #[test]
    fn four_rooms_is_connected() {
        let maze = four_rooms(2).unwrap();
        let mdp = FiniteMDP::from_maze(&maze, 0.9).unwrap();
        assert_eq!(mdp.n_states, 20);
    }
}
