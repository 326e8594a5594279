//! Experiment plans: train every (agent, seed) pair and evaluate it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, AgentController, EvalResult};
use super::stats::{bootstrap_means, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::agents::{train, Agent, AgentSpec, MetricLog, Variant};
use crate::data::Dataset;
use crate::envs::{builtin, generate_dataset, Cell, MazeSpec, Style};
use crate::error::{Error, Result};
use crate::rng::{self, ids};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    pub style: Style,
    pub n: usize,
    pub h: usize,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub env: String,
    pub dataset: DatasetParams,
    pub agents: Vec<AgentSpec>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub episodes: usize,
    /// Evaluation tasks as (start cell, goal cell).
    pub goals: Vec<(Cell, Cell)>,
}

impl ExperimentPlan {
    pub fn validate(&self, env: &MazeSpec) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("experiment plan needs at least one seed"));
        }
        if self.agents.is_empty() || self.episodes == 0 || self.goals.is_empty() {
            return Err(Error::config("experiment plan needs agents, episodes and goals"));
        }
        for &(s, g) in &self.goals {
            if env.distance(s, g).is_none() {
                return Err(Error::Unreachable(format!("evaluation goal {g:?} from {s:?}")));
            }
        }
        for a in &self.agents {
            a.validate()?;
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<MazeSpec> {
        builtin(&self.env)
    }

    pub fn make_dataset(&self, env: &MazeSpec) -> Result<Dataset> {
        let d = &self.dataset;
        generate_dataset(env, d.style, d.n, d.h, d.noise, d.seed)
    }
}

/// One trained and evaluated (agent, seed) pair.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub steps_done: usize,
    pub aborted: Option<String>,
    pub log: MetricLog,
    pub eval: EvalResult,
}

/// Evaluates with mean actions; starts and teleports use the seed's
/// `EVAL_START` and `ENV` streams.
pub fn eval_agent(agent: &Agent, env: &MazeSpec, goals: &[(Cell, Cell)], episodes: usize, seed: u64) -> Result<EvalResult> {
    let mut ctrl = AgentController {
        agent,
        deterministic: true,
        rng: rng::stream(seed, ids::EVAL_POLICY),
    };
    let mut start_rng = rng::stream(seed, ids::EVAL_START);
    let mut env_rng = rng::stream(seed, ids::ENV);
    evaluate(&mut ctrl, env, goals, episodes, None, &mut start_rng, &mut env_rng)
}

pub fn run_one(plan: &ExperimentPlan, env: &MazeSpec, ds: &Dataset, spec: &AgentSpec, seed: u64) -> Result<(Agent, RunResult)> {
    let out = train(spec, ds, plan.steps, seed)?;
    let eval = eval_agent(&out.agent, env, &plan.goals, plan.episodes, seed)?;
    let result = RunResult {
        variant: spec.variant,
        seed,
        steps_done: out.steps_done,
        aborted: out.aborted.map(|e| e.to_string()),
        log: out.log,
        eval,
    };
    Ok((out.agent, result))
}

/// Runs every (agent, seed) pair, `jobs` at a time. Results come back in
/// plan order regardless of `jobs`.
pub fn run_plan(plan: &ExperimentPlan, jobs: usize) -> Result<Vec<RunResult>> {
    let env = plan.environment()?;
    plan.validate(&env)?;
    let ds = plan.make_dataset(&env)?;
    let pairs: Vec<(&AgentSpec, u64)> = plan
        .agents
        .iter()
        .flat_map(|a| plan.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<RunResult>>> = (0..pairs.len()).map(|_| None).collect();
    for (chunk_idx, chunk) in pairs.chunks(jobs).enumerate() {
        let done: Vec<Result<RunResult>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&(spec, seed)| {
                    let (env, ds) = (&env, &ds);
                    scope.spawn(move || run_one(plan, env, ds, spec, seed).map(|(_, r)| r))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        for (i, r) in done.into_iter().enumerate() {
            results[chunk_idx * jobs + i] = Some(r);
        }
    }
    results.into_iter().map(|r| r.expect("every pair ran")).collect()
}

/// Aggregate row mirroring a results table cell: mean over seeds of the
/// per-seed mean success, with a bootstrap CI over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub seeds: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Aggregates `runs` per variant (in first-appearance order), optionally
/// restricted to a subset of goal indices.
pub fn aggregate(runs: &[RunResult], goal_subset: Option<&[usize]>, seed: u64) -> Result<Vec<AggregateRow>> {
    let mut order: Vec<Variant> = Vec::new();
    for r in runs {
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
    }
    let mut rows = Vec::new();
    for v in order {
        let means: Vec<f64> = runs
            .iter()
            .filter(|r| r.variant == v)
            .map(|r| seed_mean(&r.eval, goal_subset))
            .collect();
        let mut rng = rng::stream(seed, ids::BOOTSTRAP);
        let (ci_low, ci_high) = bootstrap_means(&means, DEFAULT_RESAMPLES, DEFAULT_LEVEL, &mut rng)?;
        rows.push(AggregateRow {
            variant: v,
            seeds: means.len(),
            mean: means.iter().sum::<f64>() / means.len() as f64,
            ci_low,
            ci_high,
        });
    }
    Ok(rows)
}

/// Mean per-goal success rate of one run, over `subset` if given.
pub fn seed_mean(eval: &EvalResult, subset: Option<&[usize]>) -> f64 {
    let rates: Vec<f64> = eval
        .goals
        .iter()
        .enumerate()
        .filter(|(i, _)| subset.is_none_or(|s| s.contains(i)))
        .map(|(_, g)| g.rate())
        .collect();
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

/// Per-goal rows followed by one aggregate row per variant.
pub fn results_csv(runs: &[RunResult], seed: u64) -> Result<String> {
    let mut out = String::from("variant,seed,goal_index,start,goal,successes,episodes,rate,ci_low,ci_high\n");
    for r in runs {
        for (i, g) in r.eval.goals.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{} {},{} {},{},{},{},,",
                r.variant,
                r.seed,
                i,
                g.start.row,
                g.start.col,
                g.goal.row,
                g.goal.col,
                g.successes(),
                g.outcomes.len(),
                g.rate()
            )
            .expect("string write");
        }
    }
    for a in aggregate(runs, None, seed)? {
        writeln!(out, "{},all,all,,,,,{},{},{}", a.variant, a.mean, a.ci_low, a.ci_high).expect("string write");
    }
    Ok(out)
}
