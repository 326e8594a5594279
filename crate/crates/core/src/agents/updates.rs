//! The shared value-learning and policy-extraction updates.
//!
//! Each function runs one gradient step on the networks it owns, then
//! Polyak-updates their targets. Losses are checked for finiteness before
//! any parameter is touched.

use super::agent::{Agent, NetId, Scope};
use super::spec::{PolicyLoss, Variant};
use crate::data::SampledBatch;
use crate::error::{Error, Result};
use crate::tensor_core::{Adam, Graph, Tensor, Var};

/// Named scalar losses of one update.
pub type Losses = Vec<(&'static str, f64)>;

/// Numerical floor on the DDPGBC critic scale `mean |Q|`.
const Q_SCALE_FLOOR: f64 = 1e-8;

struct Consts {
    s: Var,
    a: Var,
    s_next: Var,
    waypoint: Var,
    goal: Var,
    reward: Var,
}

fn consts(g: &mut Graph, b: &SampledBatch) -> Consts {
    Consts {
        s: g.constant(b.s.clone()),
        a: g.constant(b.a.clone()),
        s_next: g.constant(b.s_next.clone()),
        waypoint: g.constant(b.waypoint.clone()),
        goal: g.constant(b.goal.clone()),
        reward: g.constant(b.reward.clone()),
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            step: 0,
            detail: format!("{name} loss is {v}"),
        })
    }
}

type NetGrads = Vec<(NetId, Vec<Tensor>)>;

fn collect(sc: &Scope<'_>, loss: Var, name: &str, owners: &[NetId]) -> Result<(f64, NetGrads)> {
    let value = sc.g.value(loss).item()?;
    check_finite(name, value)?;
    let grads = sc.g.backward(loss)?;
    let mut out = Vec::with_capacity(owners.len());
    for &id in owners {
        let gr = if id.is_policy() {
            sc.policy_grads(id, &grads)
        } else {
            sc.value_grads(id, &grads)
        };
        if gr.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric {
                step: 0,
                detail: format!("non-finite gradient for {} in the {name} update", id.name()),
            });
        }
        out.push((id, gr));
    }
    Ok((value, out))
}

fn apply(agent: &mut Agent, grads: NetGrads) -> Result<()> {
    let adam = Adam::with_lr(agent.spec.lr);
    let rate = agent.spec.target_rate;
    for (id, gr) in grads {
        if id.is_policy() {
            let slot = agent.policy_slot_mut(id)?;
            adam.step(slot.head.params_mut(), &gr, &mut slot.opt)?;
            slot.head.project();
        } else {
            let slot = agent.value_slot_mut(id)?;
            adam.step(slot.net.online.iter_mut(), &gr, &mut slot.opt)?;
            slot.net.polyak_update(rate);
        }
    }
    Ok(())
}

/// Builds a loss over `agent`'s networks, then applies one Adam step to
/// `owners`. Returns the loss value and any extra diagnostics.
fn run<F>(agent: &mut Agent, owners: &[NetId], name: &str, build: F) -> Result<(f64, Option<(&'static str, f64)>)>
where
    F: FnOnce(&mut Scope<'_>) -> Result<(Var, Option<(&'static str, f64)>)>,
{
    let (value, grads, extra) = {
        let mut sc = Scope::new(agent, owners);
        let (loss, extra) = build(&mut sc)?;
        let (value, grads) = collect(&sc, loss, name, owners)?;
        (value, grads, extra)
    };
    apply(agent, grads)?;
    Ok((value, extra))
}

fn low_nets(v: Variant) -> (NetId, NetId) {
    match v {
        Variant::Iql => (NetId::V, NetId::Q),
        _ => (NetId::Vl, NetId::Ql),
    }
}

/// IQL-style value learning at the low level (flat `V`, `Q` for IQL).
/// The batch goal plays the role of `g_s`.
///
/// `V_l` regresses expectile-wise towards the target critic; `Q_l` then
/// regresses onto `r(s, g_s) + γ_l V_l(s', g_s)` using the freshly updated
/// `V_l`.
pub fn update_low_value_iql(agent: &mut Agent, batch: &SampledBatch) -> Result<Losses> {
    let variant = agent.variant();
    if variant == Variant::Hiql1vr {
        return Err(Error::usage("hiql1vr has no low-level value networks"));
    }
    let (v_id, q_id) = low_nets(variant);
    let gamma = if variant == Variant::Iql {
        agent.spec.gamma
    } else {
        agent.spec.gamma_l()
    };
    let tau = agent.spec.tau;
    let v_owners: Vec<NetId> = if variant == Variant::Hiql2vr {
        vec![v_id, NetId::Phi]
    } else {
        vec![v_id]
    };
    let (v_val, _) = run(agent, &v_owners, "value", |sc| {
        let c = consts(&mut sc.g, batch);
        let q_t = sc.q_low(c.s, c.goal, c.a, true)?;
        let v = sc.v_low(c.s, c.goal, false)?;
        let diff = sc.g.sub(q_t, v)?;
        let e = sc.g.expectile(diff, tau);
        Ok((sc.g.mean_all(e), None))
    })?;
    let (q_val, _) = run(agent, &[q_id], "critic", |sc| {
        let c = consts(&mut sc.g, batch);
        let v_next = sc.v_low(c.s_next, c.goal, false)?;
        let disc = sc.g.scale(v_next, gamma);
        let target = sc.g.add(c.reward, disc)?;
        let q = sc.q_low(c.s, c.goal, c.a, false)?;
        let err = sc.g.sub(q, target)?;
        let sq = sc.g.square(err);
        Ok((sc.g.mean_all(sq), None))
    })?;
    Ok(if variant == Variant::Iql {
        vec![("v", v_val), ("q", q_val)]
    } else {
        vec![("v_l", v_val), ("q_l", q_val)]
    })
}

/// Action-free expectile TD on the high level: `V_h(s, g)` towards
/// `r(s, g) + γ Ṽ_h(s', g)`. HIQL1vr updates its single `V` jointly with
/// `φ`, with the target computed from the target copies of both.
pub fn update_high_value_ivl(agent: &mut Agent, batch: &SampledBatch) -> Result<Losses> {
    let variant = agent.variant();
    let owners: Vec<NetId> = match variant {
        Variant::Iql => return Err(Error::usage("iql has no high-level value network")),
        Variant::Hiql1vr => vec![NetId::V, NetId::Phi],
        _ => vec![NetId::Vh],
    };
    let (gamma, tau) = (agent.spec.gamma, agent.spec.tau);
    let (val, _) = run(agent, &owners, "high value", |sc| {
        let c = consts(&mut sc.g, batch);
        let v_next = sc.v_high(c.s_next, c.goal, true)?;
        let disc = sc.g.scale(v_next, gamma);
        let target = sc.g.add(c.reward, disc)?;
        let v = sc.v_high(c.s, c.goal, false)?;
        let diff = sc.g.sub(target, v)?;
        let e = sc.g.expectile(diff, tau);
        Ok((sc.g.mean_all(e), None))
    })?;
    Ok(vec![(if variant == Variant::Hiql1vr { "v" } else { "v_h" }, val)])
}

/// Regresses `Q_h(s, g, ω*)` onto `V_h(g_s, g)` where `ω*` is the
/// stopgradded option target for the waypoint.
pub fn fit_high_q(agent: &mut Agent, batch: &SampledBatch) -> Result<Losses> {
    if !agent.variant().is_hierarchical() {
        return Err(Error::usage("iql has no high-level critic"));
    }
    let (val, _) = run(agent, &[NetId::Qh], "high critic", |sc| {
        let c = consts(&mut sc.g, batch);
        let target = sc.v_high(c.waypoint, c.goal, false)?;
        let target = sc.g.detach(target);
        let option = sc.option_target(c.s, c.waypoint)?;
        let q = sc.q_high(c.s, c.goal, option)?;
        let err = sc.g.sub(q, target)?;
        let sq = sc.g.square(err);
        Ok((sc.g.mean_all(sq), None))
    })?;
    Ok(vec![("q_h", val)])
}

/// AWR weights `min(exp(α A), cap)` from an advantage column.
pub fn awr_weights(adv: &Tensor, alpha: f64, cap: f64) -> Tensor {
    adv.map(|a| (alpha * a).exp().min(cap))
}

/// `-mean(w log π)` with constant weights; also returns `mean w`.
fn awr_loss(sc: &mut Scope<'_>, adv: Var, logp: Var, alpha: f64, cap: f64) -> Result<(Var, f64)> {
    let w = awr_weights(sc.g.value(adv), alpha, cap);
    let mean_w = w.mean();
    let wv = sc.g.constant(w);
    let weighted = sc.g.mul(wv, logp)?;
    let m = sc.g.mean_all(weighted);
    Ok((sc.g.scale(m, -1.0), mean_w))
}

/// `-mean Q / stopgrad(mean |Q|) - α mean log π`.
fn ddpgbc_loss(sc: &mut Scope<'_>, q: Var, logp: Var, alpha: f64) -> Result<Var> {
    let scale = sc.g.value(q).map(f64::abs).mean().max(Q_SCALE_FLOOR);
    let mq = sc.g.mean_all(q);
    let ml = sc.g.mean_all(logp);
    let a = sc.g.scale(mq, -1.0 / scale);
    let b = sc.g.scale(ml, -alpha);
    sc.g.add(a, b)
}

/// One gradient step on the low-level (or flat) policy. ARLi and ARLe also
/// train `φ` through the policy's conditioning input.
pub fn update_low_policy(agent: &mut Agent, batch: &SampledBatch) -> Result<Losses> {
    let variant = agent.variant();
    let spec = agent.spec.clone();
    let cap = spec.exp_adv_max;
    if variant == Variant::Iql {
        let (val, extra) = run(agent, &[NetId::Pi], "policy", |sc| {
            let head = sc.agent().policy(NetId::Pi)?;
            let c = consts(&mut sc.g, batch);
            let x = sc.g.concat(&[c.s, c.goal])?;
            let out = sc.policy(NetId::Pi, x)?;
            let logp = head.log_prob_graph(&mut sc.g, out, &batch.a)?;
            match spec.flat_loss {
                PolicyLoss::Awr => {
                    let q = sc.q_low(c.s, c.goal, c.a, true)?;
                    let v = sc.v_low(c.s, c.goal, false)?;
                    let adv = sc.g.sub(q, v)?;
                    let (l, w) = awr_loss(sc, adv, logp, spec.alpha, cap)?;
                    Ok((l, Some(("pi_weight", w))))
                }
                PolicyLoss::Ddpgbc => {
                    let mu = head.critic_action_graph(&mut sc.g, out);
                    let q = sc.q_low(c.s, c.goal, mu, false)?;
                    let bc = sc.g.value(logp).mean();
                    Ok((ddpgbc_loss(sc, q, logp, spec.alpha)?, Some(("pi_logp", bc))))
                }
            }
        })?;
        return Ok(std::iter::once(("pi", val)).chain(extra).collect());
    }

    if variant == Variant::Hiql1vr && spec.low_loss == PolicyLoss::Ddpgbc {
        return Err(Error::config("hiql1vr has no low-level critic for DDPGBC"));
    }
    let owners: Vec<NetId> = match variant {
        Variant::Arli | Variant::Arle => vec![NetId::PiL, NetId::Phi],
        _ => vec![NetId::PiL],
    };
    let (val, extra) = run(agent, &owners, "low policy", |sc| {
        let head = sc.agent().policy(NetId::PiL)?;
        let c = consts(&mut sc.g, batch);
        let cond = sc.low_condition(c.s, c.waypoint)?;
        let x = sc.g.concat(&[c.s, cond])?;
        let out = sc.policy(NetId::PiL, x)?;
        let logp = head.log_prob_graph(&mut sc.g, out, &batch.a)?;
        match spec.low_loss {
            PolicyLoss::Awr => {
                let adv = if variant == Variant::Hiql1vr {
                    let v_next = sc.v_low(c.s_next, c.waypoint, false)?;
                    let v = sc.v_low(c.s, c.waypoint, false)?;
                    sc.g.sub(v_next, v)?
                } else {
                    let q = sc.q_low(c.s, c.waypoint, c.a, true)?;
                    let v = sc.v_low(c.s, c.waypoint, false)?;
                    sc.g.sub(q, v)?
                };
                let (l, w) = awr_loss(sc, adv, logp, spec.alpha_l, cap)?;
                Ok((l, Some(("pi_l_weight", w))))
            }
            PolicyLoss::Ddpgbc => {
                let mu = head.critic_action_graph(&mut sc.g, out);
                let q = sc.q_low(c.s, c.waypoint, mu, false)?;
                let bc = sc.g.value(logp).mean();
                Ok((ddpgbc_loss(sc, q, logp, spec.alpha_l)?, Some(("pi_l_logp", bc))))
            }
        }
    })?;
    Ok(std::iter::once(("pi_l", val)).chain(extra).collect())
}

/// One gradient step on `π_h` towards the stopgradded option target of
/// the batch waypoint. `φ` receives no gradient.
pub fn update_high_policy(agent: &mut Agent, batch: &SampledBatch) -> Result<Losses> {
    let variant = agent.variant();
    if !variant.is_hierarchical() {
        return Err(Error::usage("iql has no high-level policy"));
    }
    let spec = agent.spec.clone();
    let (val, extra) = run(agent, &[NetId::PiH], "high policy", |sc| {
        let head = sc.agent().policy(NetId::PiH)?;
        let c = consts(&mut sc.g, batch);
        let option = sc.option_target(c.s, c.waypoint)?;
        let target = sc.g.value(option).clone();
        let x = sc.g.concat(&[c.s, c.goal])?;
        let out = sc.policy(NetId::PiH, x)?;
        let logp = head.log_prob_graph(&mut sc.g, out, &target)?;
        match spec.high_loss {
            PolicyLoss::Awr => {
                let adv = if variant == Variant::Hiql1vr {
                    let v_way = sc.v_high(c.waypoint, c.goal, false)?;
                    let v = sc.v_high(c.s, c.goal, false)?;
                    sc.g.sub(v_way, v)?
                } else {
                    let q = sc.q_high(c.s, c.goal, option)?;
                    let v = sc.v_high(c.s, c.goal, false)?;
                    sc.g.sub(q, v)?
                };
                let (l, w) = awr_loss(sc, adv, logp, spec.alpha_h, spec.exp_adv_max)?;
                Ok((l, Some(("pi_h_weight", w))))
            }
            PolicyLoss::Ddpgbc => {
                let mu = sc.normalize_option(out.head);
                let q = sc.q_high(c.s, c.goal, mu)?;
                let bc = sc.g.value(logp).mean();
                Ok((ddpgbc_loss(sc, q, logp, spec.alpha_h)?, Some(("pi_h_logp", bc))))
            }
        }
    })?;
    Ok(std::iter::once(("pi_h", val)).chain(extra).collect())
}
