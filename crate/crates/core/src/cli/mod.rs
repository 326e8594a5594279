//! Command-line interface of the `arl` binary.
//!
//! Every subcommand reads the same [`RunConfig`]: defaults, then an
//! optional `--config` TOML file, then `--set key=value` pairs, then the
//! subcommand's own flags. The effective config is written to
//! `config.toml` in the output directory.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::*;
pub use config::*;

use crate::error::Error;

#[derive(Parser, Debug)]
#[command(name = "arl", version, about = "Offline goal-conditioned hierarchical RL on synthetic mazes")]
pub struct Cli {
    /// TOML config file with dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set agent.tau=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Parallel (variant, seed) runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub env: Option<String>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<String>,
    /// Single run seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate an offline dataset.
    GenData {
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        style: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Train agents and write checkpoints and metric logs.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        profile: Option<String>,
    },
    /// Evaluate trained checkpoints.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Directory holding the trained runs.
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated task indices.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<usize>,
        /// Mean actions (the default).
        #[arg(long, conflicts_with = "stochastic")]
        deterministic: bool,
        /// Sampled actions.
        #[arg(long)]
        stochastic: bool,
    },
    /// Write a value grid of one checkpoint.
    DumpGrid {
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `goal` or `waypoint`.
        #[arg(long)]
        target: Option<String>,
        /// Fixed point as `x,y`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        point: Vec<f64>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
    },
    /// Sweep random finite MDPs through the concentrability checks.
    Tabular {
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        max_states: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

type Overrides = Vec<(String, toml::Value)>;

fn push<T: Into<toml::Value>>(o: &mut Overrides, key: &str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key.to_string(), v.into()));
    }
}

fn push_path(o: &mut Overrides, key: &str, v: &Option<PathBuf>) {
    push(o, key, v.as_ref().map(|p| p.display().to_string()));
}

fn int(v: impl TryInto<i64>) -> toml::Value {
    toml::Value::Integer(v.try_into().unwrap_or(i64::MAX))
}

fn run_overrides(o: &mut Overrides, r: &RunArgs) {
    push(o, "env", r.env.clone());
    if !r.variant.is_empty() {
        o.push(("variants".into(), toml::Value::Array(r.variant.iter().map(|v| v.clone().into()).collect())));
    }
    if let Some(s) = r.seed {
        o.push(("seeds".into(), toml::Value::Array(vec![int(s)])));
    }
    if !r.seeds.is_empty() {
        o.push(("seeds".into(), toml::Value::Array(r.seeds.iter().map(|&s| int(s)).collect())));
    }
}

fn overrides(cli: &Cli) -> Result<Overrides, Error> {
    let mut o = Overrides::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        o.push((k.trim().to_string(), parse_value(v.trim())));
    }
    push_path(&mut o, "out", &cli.out);
    push(&mut o, "jobs", cli.jobs.map(int));
    match &cli.command {
        Command::GenData {
            env,
            style,
            n,
            h,
            noise,
            seed,
            ..
        } => {
            push(&mut o, "env", env.clone());
            push(&mut o, "dataset.style", style.clone());
            push(&mut o, "dataset.n", n.map(int));
            push(&mut o, "dataset.h", h.map(int));
            push(&mut o, "dataset.noise", *noise);
            push(&mut o, "dataset.seed", seed.map(int));
        }
        Command::Train {
            run,
            steps,
            dataset,
            profile,
        } => {
            run_overrides(&mut o, run);
            push(&mut o, "train.steps", steps.map(int));
            push_path(&mut o, "dataset.path", dataset);
            push(&mut o, "agent.profile", profile.clone());
        }
        Command::Eval {
            run,
            runs,
            episodes,
            tasks,
            stochastic,
            ..
        } => {
            run_overrides(&mut o, run);
            push_path(&mut o, "eval.runs", runs);
            push(&mut o, "eval.episodes", episodes.map(int));
            if !tasks.is_empty() {
                o.push(("eval.tasks".into(), toml::Value::Array(tasks.iter().map(|&t| int(t)).collect())));
            }
            if *stochastic {
                o.push(("eval.deterministic".into(), false.into()));
            }
        }
        Command::DumpGrid {
            env,
            checkpoint,
            target,
            point,
            nx,
            ny,
        } => {
            push(&mut o, "env", env.clone());
            push_path(&mut o, "grid.checkpoint", checkpoint);
            push(&mut o, "grid.target", target.clone());
            if !point.is_empty() {
                o.push(("grid.point".into(), toml::Value::Array(point.iter().map(|&x| x.into()).collect())));
            }
            push(&mut o, "grid.nx", nx.map(int));
            push(&mut o, "grid.ny", ny.map(int));
        }
        Command::Tabular {
            instances,
            max_states,
            seed,
        } => {
            push(&mut o, "tabular.instances", instances.map(int));
            push(&mut o, "tabular.max_states", max_states.map(int));
            push(&mut o, "tabular.seed", seed.map(int));
        }
    }
    Ok(o)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let mut cfg = RunConfig::build(cli.config.as_deref(), &overrides(cli)?)?;
    cfg.resolve_paths(&std::env::current_dir()?);
    match &cli.command {
        Command::GenData { force, .. } => {
            let path = cmd_gen_data(&cfg, *force)?;
            println!("wrote {}", path.display());
        }
        Command::Train { .. } => {
            for r in cmd_train(&cfg)? {
                let last = r.log.last().map(|m| format!("{:?}", m.losses)).unwrap_or_default();
                println!("{} seed {}: {} {last}", r.variant, r.seed, r.dir.display());
            }
        }
        Command::Eval { .. } => {
            let path = cmd_eval(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::DumpGrid { .. } => {
            let (path, _) = cmd_dump_grid(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Tabular { .. } => {
            let records = cmd_tabular(&cfg)?;
            let ok = records.iter().filter(|r| r.all_checks()).count();
            println!("{} instances, {ok} with every inequality holding", records.len());
        }
    }
    Ok(())
}

/// Parses `args` and runs the subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
