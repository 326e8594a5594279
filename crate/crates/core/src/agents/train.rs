//! The training loop.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::spec::{AgentSpec, Variant};
use super::updates::{
    fit_high_q, update_high_policy, update_high_value_ivl, update_low_policy, update_low_value_iql, Losses,
};
use crate::data::{sample_batch, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, ids, Stream};

/// One logged step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub losses: BTreeMap<String, f64>,
}

/// Line-delimited loss records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub records: Vec<MetricRecord>,
}

impl MetricLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("metric records serialise"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }
}

/// Result of [`train`]. When a numeric failure stops training early,
/// `aborted` holds the error and `agent` is the state after the last update
/// that completed.
#[derive(Debug)]
pub struct TrainOutput {
    pub agent: Agent,
    pub log: MetricLog,
    pub steps_done: usize,
    pub aborted: Option<Error>,
}

/// Samples the step's batches and runs the variant's updates in the order
/// low value, high value, high critic, low policy, high policy.
pub fn train_step(agent: &mut Agent, ds: &Dataset, rng: &mut Stream) -> Result<Losses> {
    let spec = agent.spec.clone();
    let (b, n) = (spec.batch_size, spec.n);
    let mut losses = Losses::new();
    if spec.variant == Variant::Iql {
        let value = sample_batch(ds, b, &spec.value_cfg(), n, rng)?;
        let policy = sample_batch(ds, b, &spec.policy_cfg(), n, rng)?;
        losses.extend(update_low_value_iql(agent, &value)?);
        losses.extend(update_low_policy(agent, &policy)?);
        return Ok(losses);
    }
    let low = if spec.variant == Variant::Hiql1vr {
        None
    } else {
        Some(sample_batch(ds, b, &spec.low_value_cfg(), n, rng)?)
    };
    let high = sample_batch(ds, b, &spec.high_value_cfg(), n, rng)?;
    let policy = sample_batch(ds, b, &spec.policy_cfg(), n, rng)?;
    if let Some(low) = &low {
        losses.extend(update_low_value_iql(agent, low)?);
    }
    losses.extend(update_high_value_ivl(agent, &high)?);
    losses.extend(fit_high_q(agent, &high)?);
    losses.extend(update_low_policy(agent, &policy)?);
    losses.extend(update_high_policy(agent, &policy)?);
    Ok(losses)
}

fn check_compatible(spec: &AgentSpec, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::usage("cannot train on an empty dataset"));
    }
    if spec.discrete && ds.action_dim != 4 {
        return Err(Error::config(format!(
            "discrete agent needs one-hot actions of width 4, dataset has {}",
            ds.action_dim
        )));
    }
    Ok(())
}

/// Trains a fresh agent for `steps` gradient steps. Fully determined by
/// `(spec, dataset, steps, seed)`.
pub fn train(spec: &AgentSpec, ds: &Dataset, steps: usize, seed: u64) -> Result<TrainOutput> {
    check_compatible(spec, ds)?;
    let mut agent = Agent::new(spec.clone(), ds.state_dim, ds.action_dim, seed)?;
    let mut rng = rng::stream(seed, ids::SAMPLER);
    let mut log = MetricLog::default();
    for step in 1..=steps {
        match train_step(&mut agent, ds, &mut rng) {
            Ok(losses) => {
                if step % spec.log_every == 0 || step == steps {
                    let losses = losses.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                    log.records.push(MetricRecord { step, losses });
                }
            }
            Err(Error::Numeric { detail, .. }) => {
                return Ok(TrainOutput {
                    agent,
                    log,
                    steps_done: step - 1,
                    aborted: Some(Error::Numeric { step, detail }),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutput {
        agent,
        log,
        steps_done: steps,
        aborted: None,
    })
}
