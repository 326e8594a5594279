use serde::{Deserialize, Serialize};

use crate::data::GoalSampleConfig;
use crate::error::{Error, Result};

/// Algorithm variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Iql,
    Hiql1vr,
    Hiql2v,
    Hiql2vr,
    Arli,
    Arle,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Iql,
        Variant::Hiql1vr,
        Variant::Hiql2v,
        Variant::Hiql2vr,
        Variant::Arli,
        Variant::Arle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Iql => "iql",
            Variant::Hiql1vr => "hiql1vr",
            Variant::Hiql2v => "hiql2v",
            Variant::Hiql2vr => "hiql2vr",
            Variant::Arli => "arli",
            Variant::Arle => "arle",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        self != Variant::Iql
    }

    /// Whether the high-level policy emits a learned embedding (as opposed
    /// to a raw subgoal state).
    pub fn uses_embedding(self) -> bool {
        !matches!(self, Variant::Iql | Variant::Hiql2v)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown variant {s}")))
    }
}

/// Policy extraction objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyLoss {
    Awr,
    Ddpgbc,
}

/// Every hyperparameter of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub variant: Variant,
    /// Subgoal steps.
    pub n: usize,
    pub gamma: f64,
    /// Expectile level.
    pub tau: f64,
    /// BC coefficient / temperature of the flat policy.
    pub alpha: f64,
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub flat_loss: PolicyLoss,
    pub low_loss: PolicyLoss,
    pub high_loss: PolicyLoss,
    /// Option embedding dimension.
    pub d: usize,
    pub target_rate: f64,
    pub exp_adv_max: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub value_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub rep_hidden: Vec<usize>,
    pub layer_norm: bool,
    /// Categorical heads over one-hot actions (gridmaze agents).
    pub discrete: bool,
    /// Loss logging interval in steps.
    pub log_every: usize,
}

/// Task profiles of the hyperparameter tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Point-mass navigation: n=25, γ=0.995, DDPGBC(0.1) flat, AWR(3) both levels.
    Pointmaze,
    /// Manipulation: n=25, γ=0.99, DDPGBC(1.0) flat, AWR(3) low, DDPGBC(0.1) high.
    Manipulation,
    /// Small mazes on a single core: nets [64, 64], n=5, γ=0.99.
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pointmaze" => Ok(Profile::Pointmaze),
            "manipulation" => Ok(Profile::Manipulation),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::config(format!("unknown profile {other}"))),
        }
    }
}

impl AgentSpec {
    /// Full-scale defaults (batch 1024, 4x1024 value/actor MLPs, 3x512
    /// representation MLP, d = 10).
    pub fn preset(variant: Variant, profile: Profile) -> Self {
        let tau = if variant == Variant::Iql { 0.9 } else { 0.7 };
        let mut spec = Self {
            variant,
            n: 25,
            gamma: 0.995,
            tau,
            alpha: 0.1,
            alpha_l: 3.0,
            alpha_h: 3.0,
            flat_loss: PolicyLoss::Ddpgbc,
            low_loss: PolicyLoss::Awr,
            high_loss: PolicyLoss::Awr,
            d: 10,
            target_rate: 0.005,
            exp_adv_max: 100.0,
            lr: 3e-4,
            batch_size: 1024,
            value_hidden: vec![1024; 4],
            actor_hidden: vec![1024; 4],
            rep_hidden: vec![512; 3],
            layer_norm: true,
            discrete: false,
            log_every: 100,
        };
        match profile {
            Profile::Pointmaze => {}
            Profile::Manipulation => {
                spec.gamma = 0.99;
                spec.alpha = 1.0;
                spec.high_loss = PolicyLoss::Ddpgbc;
                spec.alpha_h = 0.1;
            }
            Profile::Desk => {
                spec.n = 5;
                spec.gamma = 0.99;
                spec.batch_size = 64;
                spec.value_hidden = vec![64, 64];
                spec.actor_hidden = vec![64, 64];
                spec.rep_hidden = vec![64, 64];
            }
        }
        spec
    }

    /// Low-level discount `1 - 1/n`.
    pub fn gamma_l(&self) -> f64 {
        1.0 - 1.0 / self.n as f64
    }

    /// High-level discount `γ^n`.
    pub fn gamma_h(&self) -> f64 {
        self.gamma.powi(self.n as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma {} not in (0,1)", self.gamma)));
        }
        crate::tensor_core::losses::check_tau(self.tau)?;
        if self.n < 1 {
            return Err(Error::config("n must be at least 1"));
        }
        if self.variant.is_hierarchical() && self.n < 2 {
            return Err(Error::config("hierarchical variants need n >= 2 so that 0 < γ_l"));
        }
        if self.variant == Variant::Hiql1vr && self.low_loss == PolicyLoss::Ddpgbc {
            return Err(Error::config("hiql1vr has no low-level critic; use low_loss = \"awr\""));
        }
        if self.d == 0 {
            return Err(Error::config("option dimension d must be positive"));
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return Err(Error::config("target_rate must lie in (0,1]"));
        }
        if !(self.exp_adv_max > 0.0) {
            return Err(Error::config("exp_adv_max must be positive"));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::config("lr, batch_size and log_every must be positive"));
        }
        if [&self.value_hidden, &self.actor_hidden, &self.rep_hidden]
            .iter()
            .any(|h| h.contains(&0))
        {
            return Err(Error::config("hidden widths must be positive"));
        }
        if [self.alpha, self.alpha_l, self.alpha_h].iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::config("alpha coefficients must be non-negative"));
        }
        Ok(())
    }

    pub fn value_cfg(&self) -> GoalSampleConfig {
        GoalSampleConfig::value(self.gamma)
    }

    pub fn low_value_cfg(&self) -> GoalSampleConfig {
        GoalSampleConfig::low_value(self.gamma_l())
    }

    pub fn high_value_cfg(&self) -> GoalSampleConfig {
        GoalSampleConfig::high_value(self.gamma)
    }

    pub fn policy_cfg(&self) -> GoalSampleConfig {
        GoalSampleConfig::policy(self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounts_are_derived() {
        let mut s = AgentSpec::preset(Variant::Arli, Profile::Pointmaze);
        assert!((s.gamma_l() - 0.96).abs() < 1e-15);
        s.n = 10;
        assert!((s.gamma_l() - 0.9).abs() < 1e-15);
        assert!((s.gamma_h() - 0.995f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn profiles() {
        let m = AgentSpec::preset(Variant::Arle, Profile::Manipulation);
        assert_eq!(m.high_loss, PolicyLoss::Ddpgbc);
        assert_eq!(m.alpha_h, 0.1);
        assert_eq!(AgentSpec::preset(Variant::Iql, Profile::Pointmaze).tau, 0.9);
        assert_eq!(AgentSpec::preset(Variant::Hiql2v, Profile::Pointmaze).tau, 0.7);
    }

    #[test]
    fn invalid_specs() {
        let mut s = AgentSpec::preset(Variant::Iql, Profile::Desk);
        s.gamma = 1.0;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = AgentSpec::preset(Variant::Arli, Profile::Desk);
        s.tau = 1.5;
        assert!(s.validate().is_err());
        assert_eq!("HIQL2vr".parse::<Variant>().unwrap(), Variant::Hiql2vr);
    }
}
