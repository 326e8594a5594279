//! The `arl` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{default_out, GridKind, RunConfig};
use crate::agents::{train, Agent, AgentSpec, MetricLog, Variant};
use crate::data::Dataset;
use crate::envs::{action_dim, builtin, generate_dataset, Cell, MazeSpec};
use crate::error::{Error, Result};
use crate::harness::{dump_value_grid, evaluate, results_csv, AgentController, GridTarget, RunResult, ValueGrid};
use crate::rng::{self, ids};
use crate::tabular::{records_csv, records_jsonl, sweep, InstanceRecord};

pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Output directory of `command`, created, with the config echoed into it.
pub fn prepare_out(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let out = cfg.out.clone().unwrap_or_else(|| default_out(command));
    fs::create_dir_all(&out)?;
    let mut echoed = cfg.clone();
    echoed.out = Some(out.clone());
    fs::write(out.join(CONFIG_FILE), echoed.to_toml()?)?;
    Ok(out)
}

pub fn env_hash(env: &MazeSpec) -> String {
    Sha256::digest(env.canonical_text().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    env: &'a str,
    env_sha256: String,
    style: crate::envs::Style,
    seed: u64,
    trajectories: usize,
    horizon: usize,
    transitions: usize,
    created_unix: u64,
}

pub fn run_dir(root: &Path, variant: Variant, seed: u64) -> PathBuf {
    root.join(format!("{variant}_seed{seed}"))
}

pub fn cmd_gen_data(cfg: &RunConfig, force: bool) -> Result<PathBuf> {
    let env = builtin(&cfg.env)?;
    let out = cfg.out.clone().unwrap_or_else(|| default_out("gen-data"));
    let path = out.join(DATASET_FILE);
    if path.exists() && !force {
        return Err(Error::usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    let d = &cfg.dataset;
    let ds = generate_dataset(&env, d.style, d.n, d.h, d.noise, d.seed)?;
    let out = prepare_out(cfg, "gen-data")?;
    ds.save(&path)?;
    let manifest = Manifest {
        env: &env.id,
        env_sha256: env_hash(&env),
        style: d.style,
        seed: d.seed,
        trajectories: ds.num_trajectories(),
        horizon: ds.horizon,
        transitions: ds.num_transitions(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::config(e.to_string()))?;
    fs::write(out.join(MANIFEST_FILE), text + "\n")?;
    Ok(path)
}

/// Loads `dataset.path` or generates the configured dataset, and checks
/// it against the environment.
pub fn load_dataset(cfg: &RunConfig, env: &MazeSpec) -> Result<Dataset> {
    let ds = match &cfg.dataset.path {
        Some(p) => {
            if !p.exists() {
                return Err(Error::usage(format!("dataset {} does not exist", p.display())));
            }
            Dataset::load(p)?
        }
        None => {
            let d = &cfg.dataset;
            generate_dataset(env, d.style, d.n, d.h, d.noise, d.seed)?
        }
    };
    if ds.env_id != env.id || ds.state_dim != 2 || ds.action_dim != action_dim(env) {
        return Err(Error::config(format!(
            "dataset was collected on {} (actions of width {}), config env is {}",
            ds.env_id, ds.action_dim, env.id
        )));
    }
    Ok(ds)
}

fn check_spec_env(spec: &AgentSpec, env: &MazeSpec) -> Result<()> {
    if spec.discrete == env.continuous {
        return Err(Error::config(format!(
            "{} agent with discrete={} does not match {} environment {}",
            spec.variant,
            spec.discrete,
            if env.continuous { "continuous" } else { "discrete" },
            env.id
        )));
    }
    Ok(())
}

/// Outcome of one training run.
pub struct TrainedRun {
    pub variant: Variant,
    pub seed: u64,
    pub dir: PathBuf,
    pub log: MetricLog,
    pub aborted: Option<Error>,
}

fn train_one(cfg: &RunConfig, ds: &Dataset, out: &Path, variant: Variant, seed: u64) -> Result<TrainedRun> {
    let spec = cfg.agent_spec(variant)?;
    let dir = run_dir(out, variant, seed);
    fs::create_dir_all(&dir)?;
    let res = train(&spec, ds, cfg.train.steps, seed)?;
    res.agent.save(&dir.join(CHECKPOINT_FILE))?;
    res.log.write(&dir.join(METRICS_FILE))?;
    Ok(TrainedRun {
        variant,
        seed,
        dir,
        log: res.log,
        aborted: res.aborted,
    })
}

/// Runs `work` over `items`, `jobs` at a time, keeping input order.
pub fn fan_out<T: Sync, R: Send>(items: &[T], jobs: usize, work: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(jobs.max(1)) {
        let done: Vec<R> = std::thread::scope(|s| {
            let hs: Vec<_> = chunk.iter().map(|it| s.spawn(|| work(it))).collect();
            hs.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        out.extend(done);
    }
    out
}

fn pairs(cfg: &RunConfig) -> Vec<(Variant, u64)> {
    cfg.variants
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect()
}

/// Trains every (variant, seed) pair. A numeric abort still writes the
/// last good checkpoint and the log, then surfaces as the error.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainedRun>> {
    let env = builtin(&cfg.env)?;
    for &v in &cfg.variants {
        check_spec_env(&cfg.agent_spec(v)?, &env)?;
    }
    let ds = load_dataset(cfg, &env)?;
    let out = prepare_out(cfg, "train")?;
    let runs: Vec<TrainedRun> = fan_out(&pairs(cfg), cfg.jobs, |&(v, s)| train_one(cfg, &ds, &out, v, s))
        .into_iter()
        .collect::<Result<_>>()?;
    if let Some(r) = runs.iter().find(|r| r.aborted.is_some()) {
        let Some(Error::Numeric { step, detail }) = &r.aborted else {
            unreachable!("only numeric errors abort training")
        };
        return Err(Error::Numeric {
            step: *step,
            detail: format!("{} seed {}: {detail}", r.variant, r.seed),
        });
    }
    Ok(runs)
}

fn eval_tasks(cfg: &RunConfig, env: &MazeSpec) -> Result<Vec<(Cell, Cell)>> {
    match &cfg.eval.tasks {
        None => Ok(env.tasks.clone()),
        Some(ix) => ix
            .iter()
            .map(|&i| {
                env.tasks
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::config(format!("task index {i} out of range for {}", env.id)))
            })
            .collect(),
    }
}

/// Evaluates the checkpoints of every (variant, seed) pair and writes
/// per-goal rows followed by one aggregate row per variant.
pub fn cmd_eval(cfg: &RunConfig) -> Result<PathBuf> {
    let env = builtin(&cfg.env)?;
    let tasks = eval_tasks(cfg, &env)?;
    let root = cfg
        .eval
        .runs
        .clone()
        .unwrap_or_else(|| default_out("train"));
    let mut loaded = Vec::new();
    for (v, s) in pairs(cfg) {
        let path = run_dir(&root, v, s).join(CHECKPOINT_FILE);
        if !path.exists() {
            return Err(Error::usage(format!("missing checkpoint {}", path.display())));
        }
        let agent = Agent::load(&path)?;
        if agent.variant() != v {
            return Err(Error::config(format!("{} holds a {} agent, expected {v}", path.display(), agent.variant())));
        }
        loaded.push((v, s, agent));
    }
    let results: Vec<RunResult> = fan_out(&loaded, cfg.jobs, |(v, s, agent)| -> Result<RunResult> {
        let mut ctrl = AgentController {
            agent,
            deterministic: cfg.eval.deterministic,
            rng: rng::stream(*s, ids::EVAL_POLICY),
        };
        let mut start_rng = rng::stream(*s, ids::EVAL_START);
        let mut env_rng = rng::stream(*s, ids::ENV);
        let eval = evaluate(&mut ctrl, &env, &tasks, cfg.eval.episodes, None, &mut start_rng, &mut env_rng)?;
        Ok(RunResult {
            variant: *v,
            seed: *s,
            steps_done: 0,
            aborted: None,
            log: MetricLog::default(),
            eval,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let csv = results_csv(&results, cfg.eval.bootstrap_seed)?;
    let out = prepare_out(cfg, "eval")?;
    let path = out.join(RESULTS_FILE);
    fs::write(&path, csv)?;
    Ok(path)
}

pub fn cmd_dump_grid(cfg: &RunConfig) -> Result<(PathBuf, ValueGrid)> {
    let env = builtin(&cfg.env)?;
    let ckpt = cfg
        .grid
        .checkpoint
        .clone()
        .ok_or_else(|| Error::usage("dump-grid needs grid.checkpoint (--checkpoint)"))?;
    if !ckpt.exists() {
        return Err(Error::usage(format!("missing checkpoint {}", ckpt.display())));
    }
    let agent = Agent::load(&ckpt)?;
    let point = match cfg.grid.point {
        Some(p) => p,
        None => env
            .tasks
            .first()
            .map(|t| t.1.center())
            .ok_or_else(|| Error::config(format!("{} has no tasks; set grid.point", env.id)))?,
    };
    let target = match cfg.grid.target {
        GridKind::Goal => GridTarget::Goal(point),
        GridKind::Waypoint => GridTarget::Waypoint(point),
    };
    let grid = dump_value_grid(&agent, &env, target, (cfg.grid.nx, cfg.grid.ny))?;
    let out = prepare_out(cfg, "dump-grid")?;
    let path = out.join(GRID_FILE);
    let mut bytes = Vec::new();
    grid.write_csv(&mut bytes)?;
    fs::write(&path, bytes)?;
    Ok((path, grid))
}

pub fn cmd_tabular(cfg: &RunConfig) -> Result<Vec<InstanceRecord>> {
    let t = &cfg.tabular;
    let records = sweep(t.instances, t.max_states, t.seed)?;
    let out = prepare_out(cfg, "tabular")?;
    fs::write(out.join(RECORDS_FILE), records_jsonl(&records)?)?;
    fs::write(out.join(SUMMARY_FILE), records_csv(&records))?;
    Ok(records)
}
