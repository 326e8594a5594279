//! Randomised sweeps over MDP families with JSONL and CSV reports.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::abstraction::AbstractionMap;
use super::mdp::FiniteMDP;
use super::motivation::{coarsest_map, displacement_map, identity_map, verify_motivation_box, Behaviour, Hierarchy, MotivationReport};
use crate::error::{Error, Result};
use crate::rng::{self, ids, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Grid,
    Graph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub map: String,
    pub report: MotivationReport,
}

/// One analysed MDP instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub family: Family,
    pub mdp: FiniteMDP,
    pub n: usize,
    pub behaviour: Behaviour,
    pub maps: Vec<MapResult>,
}

impl InstanceRecord {
    pub fn all_checks(&self) -> bool {
        self.maps.iter().all(|m| m.report.checks.all())
    }
}

fn random_mdp(family: Family, max_states: usize, rng: &mut Stream) -> Result<FiniteMDP> {
    let gamma = [0.9, 0.95, 0.99][rng.random_range(0..3)];
    match family {
        Family::Grid => {
            let mut dims = Vec::new();
            for w in 2..=5 {
                for h in 2..=5 {
                    if w * h <= max_states {
                        dims.push((w, h));
                    }
                }
            }
            if dims.is_empty() {
                return Err(Error::config("grid instances need max_states >= 4"));
            }
            let (w, h) = dims[rng.random_range(0..dims.len())];
            let mut m = FiniteMDP::random_grid(w, h, 0.3, gamma, rng)?;
            // A random non-empty goal subset.
            let k = rng.random_range(1..=m.n_states.min(8));
            let mut goals: Vec<usize> = rand::seq::index::sample(rng, m.n_states, k).into_vec();
            goals.sort_unstable();
            m.goals = goals;
            m.validate()?;
            Ok(m)
        }
        Family::Graph => {
            let n = rng.random_range(4..=max_states.max(4));
            let a = rng.random_range(2..=4);
            let g = rng.random_range(1..=n.min(8));
            FiniteMDP::random_graph(n, a, g, gamma, rng)
        }
    }
}

fn random_behaviour(mdp: &FiniteMDP, masked: bool, rng: &mut Stream) -> Behaviour {
    if masked {
        let mut expert: Vec<bool> = (0..mdp.n_states).map(|_| rng.random::<f64>() < 0.5).collect();
        expert[rng.random_range(0..mdp.n_states)] = true;
        Behaviour::RegionMasked { expert }
    } else {
        Behaviour::Epsilon {
            eps: rng.random_range(0.05..0.6),
        }
    }
}

/// Maps analysed for every instance: the identity control, the coarsest
/// equivalence map, a random refinement of it, and the displacement map
/// on grids.
pub fn standard_maps(mdp: &FiniteMDP, n: usize, rng: &mut Stream) -> Result<Vec<(String, AbstractionMap)>> {
    let h = Hierarchy::new(mdp, n)?;
    let coarse = coarsest_map(mdp, &h);
    let refined = AbstractionMap {
        high: coarse.high.refine_random(3, rng),
        low: coarse.low.refine_random(3, rng),
    };
    let mut maps = vec![
        ("identity".to_string(), identity_map(mdp)),
        ("coarsest".to_string(), coarse),
        ("refined".to_string(), refined),
    ];
    if mdp.layout.is_some() {
        maps.push(("displacement".to_string(), displacement_map(mdp)?));
    }
    Ok(maps)
}

/// Generates and analyses `instances` random MDPs with at most
/// `max_states` states, alternating grid and graph families and
/// ε-corrupted and region-masked behaviours.
pub fn sweep(instances: usize, max_states: usize, seed: u64) -> Result<Vec<InstanceRecord>> {
    if max_states < 4 {
        return Err(Error::config("max_states must be at least 4"));
    }
    let mut rng = rng::stream(seed, ids::TABULAR);
    let mut out = Vec::with_capacity(instances);
    for i in 0..instances {
        let family = if i % 2 == 0 { Family::Grid } else { Family::Graph };
        let mdp = random_mdp(family, max_states, &mut rng)?;
        let n = rng.random_range(1..=5);
        let behaviour = random_behaviour(&mdp, (i / 2) % 2 == 1, &mut rng);
        let mut maps = Vec::new();
        for (name, map) in standard_maps(&mdp, n, &mut rng)? {
            let report = verify_motivation_box(&mdp, &behaviour, &map, n)?;
            maps.push(MapResult { map: name, report });
        }
        out.push(InstanceRecord {
            instance: i,
            family,
            mdp,
            n,
            behaviour,
            maps,
        });
    }
    Ok(out)
}

pub fn records_jsonl(records: &[InstanceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::config(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

fn witness(k: &super::occupancy::Kappa) -> String {
    k.witness
        .as_ref()
        .map(|w| w.index.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

pub const CSV_HEADER: &str = "instance,family,map,states,actions,goals,n,gamma,kappa,kappa_witness,kappa_h,kappa_h_rep,kappa_l,kappa_l_witness,kappa_l_rep,classes_high,classes_low,options_abs,options_rel,ratio_hier_flat,ratio_rep_flat,ratio_rep_hier,horizon,cardinality,options,kappa_high,kappa_low";

/// One row per (instance, map).
pub fn records_csv(records: &[InstanceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        for m in &r.maps {
            let p = &m.report;
            let family = match r.family {
                Family::Grid => "grid",
                Family::Graph => "graph",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.instance,
                family,
                m.map,
                p.states,
                p.actions,
                p.goals,
                p.n,
                p.gamma,
                real(p.kappa.value),
                witness(&p.kappa),
                real(p.kappa_h.value),
                real(p.kappa_h_rep.value),
                real(p.kappa_l.value),
                witness(&p.kappa_l),
                real(p.kappa_l_rep.value),
                p.classes_high,
                p.classes_low,
                p.options_abs,
                p.options_rel,
                real(p.ratio_hier_flat),
                real(p.ratio_rep_flat),
                real(p.ratio_rep_hier),
                p.checks.horizon,
                p.checks.cardinality,
                p.checks.options,
                p.checks.kappa_high,
                p.checks.kappa_low
            )
            .expect("string write");
        }
    }
    out
}
