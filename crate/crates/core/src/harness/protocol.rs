//! The desk-scale comparison: six variants, four seeds, one stitch dataset
//! on the 15x15 pointmaze, with per-run results cached as JSON so an
//! interrupted sweep resumes where it stopped.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::translated_value_spread;
use super::plan::{run_one, DatasetParams, ExperimentPlan};
use crate::agents::{AgentSpec, Profile, Variant};
use crate::data::Dataset;
use crate::envs::{trajectory_span, MazeSpec, Style};
use crate::error::{Error, Result};

/// Cell displacements at which low-level value spreads are measured.
pub const SPREAD_DISPLACEMENTS: [[i64; 2]; 6] = [[0, 1], [1, 0], [1, 1], [2, 0], [0, 2], [-1, 1]];

/// Far goals lie at least this many trajectory spans away.
pub const FAR_SPANS: usize = 4;

pub fn desk_plan() -> Result<ExperimentPlan> {
    let env = crate::envs::builtin("pointmaze15")?;
    Ok(ExperimentPlan {
        env: env.id.clone(),
        dataset: DatasetParams {
            style: Style::Stitch,
            n: 2000,
            h: 50,
            noise: 0.1,
            seed: 1,
        },
        agents: Variant::ALL.iter().map(|&v| AgentSpec::preset(v, Profile::Desk)).collect(),
        seeds: vec![0, 1, 2, 3],
        steps: 50_000,
        episodes: 20,
        goals: env.tasks.clone(),
    })
}

pub fn plan_hash(plan: &ExperimentPlan) -> String {
    let text = serde_json::to_string(plan).expect("plans serialise");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Indices of adjacent (distance 1) and far goals, and the largest
/// trajectory span of the dataset.
pub fn goal_classes(plan: &ExperimentPlan, env: &MazeSpec, ds: &Dataset) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    let span = (0..ds.num_trajectories())
        .map(|i| trajectory_span(env, ds, i))
        .max()
        .unwrap_or(0);
    let mut adjacent = Vec::new();
    let mut far = Vec::new();
    for (i, &(s, g)) in plan.goals.iter().enumerate() {
        let d = env
            .distance(s, g)
            .ok_or_else(|| Error::Unreachable(format!("goal {g:?} from {s:?}")))?;
        if d == 1 {
            adjacent.push(i);
        }
        if d >= FAR_SPANS * span {
            far.push(i);
        }
    }
    Ok((adjacent, far, span))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub variant: Variant,
    pub seed: u64,
    /// Per-goal success rates in plan order.
    pub rates: Vec<f64>,
    pub steps_done: usize,
    pub aborted: Option<String>,
    pub wall_secs: f64,
    pub value_spread: f64,
}

impl ProtocolRun {
    pub fn mean_over(&self, subset: &[usize]) -> f64 {
        if subset.is_empty() {
            return 0.0;
        }
        subset.iter().map(|&i| self.rates[i]).sum::<f64>() / subset.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub plan_sha256: String,
    pub max_span: usize,
    pub adjacent: Vec<usize>,
    pub far: Vec<usize>,
    pub runs: Vec<ProtocolRun>,
}

impl ProtocolReport {
    pub fn runs_of(&self, v: Variant) -> impl Iterator<Item = &ProtocolRun> {
        self.runs.iter().filter(move |r| r.variant == v)
    }

    /// Mean over seeds of the per-seed mean success on `subset`.
    pub fn seed_mean(&self, v: Variant, subset: &[usize]) -> f64 {
        let m: Vec<f64> = self.runs_of(v).map(|r| r.mean_over(subset)).collect();
        if m.is_empty() {
            f64::NAN
        } else {
            m.iter().sum::<f64>() / m.len() as f64
        }
    }

    pub fn is_complete(&self, plan: &ExperimentPlan) -> bool {
        self.runs.len() == plan.agents.len() * plan.seeds.len()
    }
}

/// Loads a cached report for `plan`, if one exists with the same hash.
pub fn load_report(path: &Path, plan: &ExperimentPlan) -> Result<Option<ProtocolReport>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    let r: ProtocolReport = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((r.plan_sha256 == plan_hash(plan)).then_some(r))
}

/// Trains and evaluates every missing (variant, seed) pair of `plan`,
/// rewriting `cache` after each run.
pub fn run_protocol(
    plan: &ExperimentPlan,
    cache: &Path,
    mut progress: impl FnMut(&ProtocolRun),
) -> Result<ProtocolReport> {
    let env = plan.environment()?;
    plan.validate(&env)?;
    let ds = plan.make_dataset(&env)?;
    let (adjacent, far, max_span) = goal_classes(plan, &env, &ds)?;
    let mut report = load_report(cache, plan)?.unwrap_or(ProtocolReport {
        plan_sha256: plan_hash(plan),
        max_span,
        adjacent,
        far,
        runs: Vec::new(),
    });
    for spec in &plan.agents {
        for &seed in &plan.seeds {
            if report.runs.iter().any(|r| r.variant == spec.variant && r.seed == seed) {
                continue;
            }
            let t = Instant::now();
            let (agent, res) = run_one(plan, &env, &ds, spec, seed)?;
            let wall_secs = t.elapsed().as_secs_f64();
            let run = ProtocolRun {
                variant: spec.variant,
                seed,
                rates: res.eval.goals.iter().map(|g| g.rate()).collect(),
                steps_done: res.steps_done,
                aborted: res.aborted,
                wall_secs,
                value_spread: translated_value_spread(&agent, &env, &SPREAD_DISPLACEMENTS)?,
            };
            progress(&run);
            report.runs.push(run);
            if let Some(dir) = cache.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::config(e.to_string()))?;
            std::fs::write(cache, text + "\n")?;
        }
    }
    Ok(report)
}
