//! Run configuration: a TOML document with dotted keys, layered over
//! built-in defaults and overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, Profile, Variant};
use crate::envs::Style;
use crate::error::{Error, Result};

/// Env var naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "ARL_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Existing dataset file; generated from the parameters below when
    /// absent.
    pub path: Option<PathBuf>,
    pub style: Style,
    pub n: usize,
    pub h: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            style: Style::Stitch,
            n: 2000,
            h: 50,
            noise: 0.1,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 50_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Directory holding `<variant>_seed<seed>/checkpoint.bin`; defaults to
    /// the output directory.
    pub runs: Option<PathBuf>,
    pub episodes: usize,
    /// Indices into the environment's task list; all tasks when absent.
    pub tasks: Option<Vec<usize>>,
    pub deterministic: bool,
    pub bootstrap_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: None,
            episodes: 20,
            tasks: None,
            deterministic: true,
            bootstrap_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Goal,
    Waypoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub checkpoint: Option<PathBuf>,
    pub target: GridKind,
    /// Fixed goal or waypoint; the first task's goal centre when absent.
    pub point: Option<[f64; 2]>,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            target: GridKind::Goal,
            point: None,
            nx: 60,
            ny: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularConfig {
    pub instances: usize,
    pub max_states: usize,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            max_states: 25,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: String,
    /// Output directory; `$ARL_OUTPUT_ROOT/<command>` when absent.
    pub out: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub dataset: DatasetConfig,
    /// `profile` plus overrides of any agent hyperparameter.
    pub agent: toml::Table,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub grid: GridConfig,
    pub tabular: TabularConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut agent = toml::Table::new();
        agent.insert("profile".into(), toml::Value::String("desk".into()));
        Self {
            env: "pointmaze15".into(),
            out: None,
            variants: vec![Variant::Arli],
            seeds: vec![0],
            jobs: 1,
            dataset: DatasetConfig::default(),
            agent,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            grid: GridConfig::default(),
            tabular: TabularConfig::default(),
        }
    }
}

fn toml_err(e: impl std::fmt::Display) -> Error {
    Error::config(e.to_string())
}

/// Parses a flag value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("bad config key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("config key {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then `overrides` in order.
    pub fn build(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default()).map_err(toml_err)?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            let user: toml::Table = text
                .parse()
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            merge(&mut table, user);
        }
        for (k, v) in overrides {
            set_dotted(&mut table, k, v.clone())?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(toml_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("variants and seeds must be non-empty"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        if self.agent.contains_key("variant") {
            return Err(Error::config("set the top-level `variants` list instead of agent.variant"));
        }
        for v in &self.variants {
            self.agent_spec(*v)?;
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<Profile> {
        match self.agent.get("profile") {
            None => Ok(Profile::Desk),
            Some(v) => v.clone().try_into().map_err(toml_err),
        }
    }

    /// The profile preset for `variant` with the agent overrides applied.
    pub fn agent_spec(&self, variant: Variant) -> Result<AgentSpec> {
        let preset = AgentSpec::preset(variant, self.profile()?);
        let mut table = toml::Table::try_from(preset).map_err(toml_err)?;
        let mut over = self.agent.clone();
        over.remove("profile");
        merge(&mut table, over);
        let spec: AgentSpec = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::config(format!("agent: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Makes every path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.out);
        fix(&mut self.dataset.path);
        fix(&mut self.eval.runs);
        fix(&mut self.grid.checkpoint);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_err)
    }
}

/// `$ARL_OUTPUT_ROOT/<command>`, or `runs/<command>` when unset.
pub fn default_out(command: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    let out = root.join(command);
    if out.is_relative() {
        if let Ok(cwd) = std::env::current_dir() {
            return cwd.join(out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides_apply() {
        let cfg = RunConfig::build(
            None,
            &[
                ("agent.tau".into(), parse_value("0.8")),
                ("dataset.style".into(), parse_value("navigate")),
                ("variants".into(), parse_value("[\"iql\", \"arle\"]")),
            ],
        )
        .unwrap();
        assert_eq!(cfg.dataset.style, Style::Navigate);
        assert_eq!(cfg.agent_spec(Variant::Iql).unwrap().tau, 0.8);
        assert_eq!(cfg.variants, vec![Variant::Iql, Variant::Arle]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for key in ["dataset.colour", "agent.colour", "nonsense"] {
            let err = RunConfig::build(None, &[(key.into(), parse_value("1"))]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{key}: {err}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::build(None, &[("train.steps".into(), parse_value("10"))]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("config.toml");
        std::fs::write(&p, cfg.to_toml().unwrap()).unwrap();
        assert_eq!(RunConfig::build(Some(&p), &[]).unwrap(), cfg);
    }
}
