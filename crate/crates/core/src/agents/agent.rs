//! Per-variant network sets, the shared input wiring, and deployment.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{AgentSpec, Variant};
use crate::error::{Error, Result};
use crate::rng::{self, ids, Stream};
use crate::tensor_core::checkpoint::{Container, Entry};
use crate::tensor_core::mlp::{Bound, FinalInit, NetBundle};
use crate::tensor_core::policy::{HeadKind, PolicyBound, PolicyHead, PolicyOut};
use crate::tensor_core::{AdamState, Gradients, Graph, Tensor, Var};

/// Names of the networks an agent may own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NetId {
    V,
    Q,
    Vl,
    Ql,
    Vh,
    Qh,
    Pi,
    PiL,
    PiH,
    Phi,
}

impl NetId {
    pub const ALL: [NetId; 10] = [
        NetId::V,
        NetId::Q,
        NetId::Vl,
        NetId::Ql,
        NetId::Vh,
        NetId::Qh,
        NetId::Pi,
        NetId::PiL,
        NetId::PiH,
        NetId::Phi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetId::V => "v",
            NetId::Q => "q",
            NetId::Vl => "v_l",
            NetId::Ql => "q_l",
            NetId::Vh => "v_h",
            NetId::Qh => "q_h",
            NetId::Pi => "pi",
            NetId::PiL => "pi_l",
            NetId::PiH => "pi_h",
            NetId::Phi => "phi",
        }
    }

    pub fn is_policy(self) -> bool {
        matches!(self, NetId::Pi | NetId::PiL | NetId::PiH)
    }

    fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == name)
    }
}

/// How the option embedder reads its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedMode {
    /// `φ(s, x)` on the concatenated pair.
    Pair,
    /// `φ(x - s)`.
    Displacement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptionNorm {
    None,
    Length,
    Soft,
}

impl Variant {
    pub fn embed_mode(self) -> Option<EmbedMode> {
        match self {
            Variant::Iql | Variant::Hiql2v => None,
            Variant::Arle => Some(EmbedMode::Displacement),
            _ => Some(EmbedMode::Pair),
        }
    }

    pub fn option_norm(self) -> OptionNorm {
        match self {
            Variant::Iql | Variant::Hiql2v => OptionNorm::None,
            Variant::Arle => OptionNorm::Soft,
            _ => OptionNorm::Length,
        }
    }

    /// The networks each variant owns.
    pub fn net_set(self) -> &'static [NetId] {
        use NetId::*;
        match self {
            Variant::Iql => &[V, Q, Pi],
            Variant::Hiql1vr => &[V, Qh, PiL, PiH, Phi],
            Variant::Hiql2v => &[Vl, Ql, Vh, Qh, PiL, PiH],
            Variant::Hiql2vr | Variant::Arli | Variant::Arle => &[Vl, Ql, Vh, Qh, PiL, PiH, Phi],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueSlot {
    pub net: NetBundle,
    pub opt: AdamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySlot {
    pub head: PolicyHead,
    pub opt: AdamState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: AgentSpec,
    state_dim: usize,
    action_dim: usize,
}

/// A trained or freshly initialised agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub spec: AgentSpec,
    state_dim: usize,
    action_dim: usize,
    values: BTreeMap<NetId, ValueSlot>,
    policies: BTreeMap<NetId, PolicySlot>,
}

/// Output of [`Agent::act`].
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub action: Vec<f64>,
    /// Normalised option fed to the low-level policy (hierarchical only).
    pub option: Option<Vec<f64>>,
    /// The raw option had norm below the length-normalisation floor.
    pub degenerate: bool,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

impl Agent {
    /// Builds the variant's networks from the `INIT` stream of `seed`.
    pub fn new(spec: AgentSpec, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::config("state and action dimensions must be positive"));
        }
        let mut rng = rng::stream(seed, ids::INIT);
        let (sd, ad, d) = (state_dim, action_dim, spec.d);
        let v = spec.variant;
        let option_dim = if v == Variant::Hiql2v { sd } else { d };
        let low_kind = if spec.discrete {
            HeadKind::Categorical
        } else {
            HeadKind::Gaussian
        };
        let mut values = BTreeMap::new();
        let mut policies = BTreeMap::new();
        for &id in v.net_set() {
            let value_in = |inp: usize| sizes(inp, &spec.value_hidden, 1);
            let layers = match (id, v) {
                (NetId::V, Variant::Iql) => Some(value_in(2 * sd)),
                (NetId::Q, _) => Some(value_in(2 * sd + ad)),
                (NetId::V, Variant::Hiql1vr) => Some(value_in(sd + d)),
                (NetId::Vl, Variant::Hiql2vr) => Some(value_in(sd + d)),
                (NetId::Vl, Variant::Arle) => Some(value_in(sd)),
                (NetId::Vl, _) => Some(value_in(2 * sd)),
                (NetId::Ql, _) => Some(value_in(2 * sd + ad)),
                (NetId::Vh, _) => Some(value_in(2 * sd)),
                (NetId::Qh, _) => Some(value_in(2 * sd + option_dim)),
                (NetId::Phi, Variant::Arle) => Some(sizes(sd, &spec.rep_hidden, d)),
                (NetId::Phi, _) => Some(sizes(2 * sd, &spec.rep_hidden, d)),
                _ => None,
            };
            if let Some(layers) = layers {
                let net = NetBundle::new(&layers, spec.layer_norm, FinalInit::Orthogonal, &mut rng)?;
                let opt = AdamState::new(net.online.iter());
                values.insert(id, ValueSlot { net, opt });
                continue;
            }
            let (input, output, kind) = match id {
                NetId::Pi => (2 * sd, ad, low_kind),
                NetId::PiL if v == Variant::Hiql2v => (2 * sd, ad, low_kind),
                NetId::PiL => (sd + d, ad, low_kind),
                NetId::PiH => (2 * sd, option_dim, HeadKind::Gaussian),
                other => unreachable!("{other:?} is not a policy"),
            };
            let head = PolicyHead::new(input, &spec.actor_hidden, output, kind, spec.layer_norm, &mut rng)?;
            let opt = AdamState::new(head.params());
            policies.insert(id, PolicySlot { head, opt });
        }
        Ok(Self {
            spec,
            state_dim,
            action_dim,
            values,
            policies,
        })
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Networks present, in canonical order.
    pub fn net_ids(&self) -> Vec<NetId> {
        let mut ids: Vec<NetId> = self.values.keys().chain(self.policies.keys()).copied().collect();
        ids.sort();
        ids
    }

    pub fn has(&self, id: NetId) -> bool {
        self.values.contains_key(&id) || self.policies.contains_key(&id)
    }

    fn missing(&self, id: NetId) -> Error {
        Error::usage(format!("{} has no {} network", self.spec.variant, id.name()))
    }

    pub fn value(&self, id: NetId) -> Result<&NetBundle> {
        self.values.get(&id).map(|s| &s.net).ok_or_else(|| self.missing(id))
    }

    pub fn policy(&self, id: NetId) -> Result<&PolicyHead> {
        self.policies.get(&id).map(|s| &s.head).ok_or_else(|| self.missing(id))
    }

    pub(crate) fn value_slot_mut(&mut self, id: NetId) -> Result<&mut ValueSlot> {
        let err = self.missing(id);
        self.values.get_mut(&id).ok_or(err)
    }

    pub(crate) fn policy_slot_mut(&mut self, id: NetId) -> Result<&mut PolicySlot> {
        let err = self.missing(id);
        self.policies.get_mut(&id).ok_or(err)
    }

    /// Every parameter tensor of `id` (online then target for value nets,
    /// trainable tensors for policies).
    pub fn net_params(&self, id: NetId) -> Result<Vec<&Tensor>> {
        if let Some(s) = self.values.get(&id) {
            return Ok(s.net.online.iter().chain(&s.net.target).collect());
        }
        Ok(self.policy(id)?.params().collect())
    }

    /// Embedder input for state `s` and target `x` (no gradient).
    pub fn phi_input(&self, s: &Tensor, x: &Tensor) -> Result<Tensor> {
        match self.variant().embed_mode() {
            Some(EmbedMode::Pair) => Tensor::concat_cols(&[s, x]),
            Some(EmbedMode::Displacement) => x.sub(s),
            None => Err(self.missing(NetId::Phi)),
        }
    }

    /// Normalised embedding rows `ô(s, x)`.
    pub fn embed(&self, s: &Tensor, x: &Tensor, use_target: bool) -> Result<Tensor> {
        let mut sc = Scope::new(self, &[]);
        let (sv, xv) = (sc.g.constant(s.clone()), sc.g.constant(x.clone()));
        let out = sc.embed(sv, xv, use_target)?;
        Ok(sc.g.value(out).clone())
    }

    /// Low-level value `V_l(s, g_s)` under the variant's input wiring
    /// (`V(s, g)` for IQL).
    pub fn low_value(&self, s: &Tensor, gs: &Tensor) -> Result<Tensor> {
        let mut sc = Scope::new(self, &[]);
        let (sv, gv) = (sc.g.constant(s.clone()), sc.g.constant(gs.clone()));
        let out = sc.v_low(sv, gv, false)?;
        Ok(sc.g.value(out).clone())
    }

    /// The tensor fed to the low-level value net for `(s, g_s)`.
    pub fn low_value_input(&self, s: &Tensor, gs: &Tensor) -> Result<Tensor> {
        let mut sc = Scope::new(self, &[]);
        let (sv, gv) = (sc.g.constant(s.clone()), sc.g.constant(gs.clone()));
        let x = sc.v_low_input(sv, gv, false)?;
        Ok(sc.g.value(x).clone())
    }

    /// The tensor fed to the low-level critic for `(s, g_s, a)`.
    pub fn low_q_input(&self, s: &Tensor, gs: &Tensor, a: &Tensor) -> Result<Tensor> {
        let mut sc = Scope::new(self, &[]);
        let (sv, gv, av) = (
            sc.g.constant(s.clone()),
            sc.g.constant(gs.clone()),
            sc.g.constant(a.clone()),
        );
        let x = sc.q_low_input(sv, gv, av)?;
        Ok(sc.g.value(x).clone())
    }

    /// High-level value `V_h(s, g)` (the single `V` for HIQL1vr and IQL).
    pub fn high_value(&self, s: &Tensor, g: &Tensor) -> Result<Tensor> {
        let mut sc = Scope::new(self, &[]);
        let (sv, gv) = (sc.g.constant(s.clone()), sc.g.constant(g.clone()));
        let out = sc.v_high(sv, gv, false)?;
        Ok(sc.g.value(out).clone())
    }

    /// Applies the variant's deployment normaliser to option rows.
    pub fn normalize_options(&self, omega: &mut Tensor) -> Vec<bool> {
        let norm = self.variant().option_norm();
        (0..omega.rows())
            .map(|r| {
                let row = omega.row_mut(r);
                match norm {
                    OptionNorm::None => false,
                    OptionNorm::Length => !crate::tensor_core::kernels::length_normalize_row(row),
                    OptionNorm::Soft => {
                        crate::tensor_core::kernels::soft_normalize_row(row);
                        false
                    }
                }
            })
            .collect()
    }

    /// Batched deployment: one action row per `(s, g)` row.
    pub fn act_batch(
        &self,
        s: &Tensor,
        g: &Tensor,
        deterministic: bool,
        rng: &mut Stream,
    ) -> Result<(Tensor, Option<Tensor>, Vec<bool>)> {
        let draw = |head: &PolicyHead, x: &Tensor, rng: &mut Stream| {
            if deterministic {
                head.mode(x)
            } else {
                head.sample(x, rng)
            }
        };
        let sg = Tensor::concat_cols(&[s, g])?;
        if !self.variant().is_hierarchical() {
            let a = draw(self.policy(NetId::Pi)?, &sg, rng)?;
            return Ok((a, None, vec![false; s.rows()]));
        }
        let mut omega = draw(self.policy(NetId::PiH)?, &sg, rng)?;
        let degenerate = self.normalize_options(&mut omega);
        let x = Tensor::concat_cols(&[s, &omega])?;
        let a = draw(self.policy(NetId::PiL)?, &x, rng)?;
        Ok((a, Some(omega), degenerate))
    }

    /// Action for a single state and goal.
    pub fn act(&self, s: &[f64], g: &[f64], deterministic: bool, rng: &mut Stream) -> Result<Action> {
        if s.len() != self.state_dim || g.len() != self.state_dim {
            return Err(Error::shape("act: state or goal has the wrong dimension"));
        }
        let st = Tensor::matrix(1, s.len(), s.to_vec())?;
        let gt = Tensor::matrix(1, g.len(), g.to_vec())?;
        let (a, omega, degenerate) = self.act_batch(&st, &gt, deterministic, rng)?;
        Ok(Action {
            action: a.into_data(),
            option: omega.map(Tensor::into_data),
            degenerate: degenerate[0],
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let header = serde_json::to_string(&Header {
            spec: self.spec.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
        })
        .map_err(|e| Error::config(e.to_string()))?;
        let mut entries = Vec::new();
        for id in self.net_ids() {
            entries.push(match self.values.get(&id) {
                Some(s) => Entry::from_net(id.name(), &s.net),
                None => Entry::from_policy(id.name(), &self.policies[&id].head),
            });
        }
        Ok(Container { header, entries })
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let h: Header =
            serde_json::from_str(&c.header).map_err(|e| Error::format(path, format!("agent header: {e}")))?;
        let mut agent = Agent::new(h.spec, h.state_dim, h.action_dim, 0)?;
        for e in &c.entries {
            let id = NetId::parse(&e.name)
                .filter(|id| agent.has(*id))
                .ok_or_else(|| Error::format(path, format!("unexpected network {}", e.name)))?;
            if let Some(slot) = agent.values.get_mut(&id) {
                let net = e.to_net()?;
                if net.layer_sizes() != slot.net.layer_sizes() {
                    return Err(Error::format(path, format!("{}: layer sizes differ from spec", e.name)));
                }
                slot.opt = AdamState::new(net.online.iter());
                slot.net = net;
            } else {
                let slot = agent.policies.get_mut(&id).expect("has() checked");
                let head = e.to_policy()?;
                if head.net.layer_sizes() != slot.head.net.layer_sizes() || head.kind() != slot.head.kind() {
                    return Err(Error::format(path, format!("{}: head differs from spec", e.name)));
                }
                slot.opt = AdamState::new(head.params());
                slot.head = head;
            }
        }
        let present: Vec<&str> = c.entries.iter().map(|e| e.name.as_str()).collect();
        if let Some(id) = agent.net_ids().into_iter().find(|id| !present.contains(&id.name())) {
            return Err(Error::format(path, format!("checkpoint lacks network {}", id.name())));
        }
        Ok(agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?, path)
    }
}

/// A computation graph over an agent's networks. Networks listed as
/// trainable bind their online parameters as gradient leaves; everything
/// else (including every target copy) is frozen.
pub(crate) struct Scope<'a> {
    pub g: Graph,
    agent: &'a Agent,
    trainable: &'a [NetId],
    nets: HashMap<(NetId, bool), Bound>,
    heads: HashMap<NetId, PolicyBound>,
}

impl<'a> Scope<'a> {
    pub fn new(agent: &'a Agent, trainable: &'a [NetId]) -> Self {
        Self {
            g: Graph::new(),
            agent,
            trainable,
            nets: HashMap::new(),
            heads: HashMap::new(),
        }
    }

    pub fn agent(&self) -> &'a Agent {
        self.agent
    }

    pub fn forward(&mut self, id: NetId, use_target: bool, x: Var) -> Result<Var> {
        let net = self.agent.value(id)?;
        let train = !use_target && self.trainable.contains(&id);
        let g = &mut self.g;
        let bound = self
            .nets
            .entry((id, use_target))
            .or_insert_with(|| net.bind(g, use_target, train));
        net.forward_graph(g, bound, x)
    }

    pub fn policy(&mut self, id: NetId, x: Var) -> Result<PolicyOut> {
        let head = self.agent.policy(id)?;
        let train = self.trainable.contains(&id);
        let g = &mut self.g;
        let bound = self.heads.entry(id).or_insert_with(|| head.bind(g, train));
        head.forward_graph(g, bound, x)
    }

    /// Gradients for the online parameters of a trainable value net.
    pub fn value_grads(&self, id: NetId, grads: &Gradients) -> Vec<Tensor> {
        match self.nets.get(&(id, false)) {
            Some(b) => b.vars().iter().map(|&v| grads.get(v)).collect(),
            None => self
                .agent
                .value(id)
                .map(|n| n.online.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .unwrap_or_default(),
        }
    }

    pub fn policy_grads(&self, id: NetId, grads: &Gradients) -> Vec<Tensor> {
        match self.heads.get(&id) {
            Some(b) => PolicyHead::grads(b, grads),
            None => self
                .agent
                .policy(id)
                .map(|h| h.params().map(|t| Tensor::zeros(t.shape())).collect())
                .unwrap_or_default(),
        }
    }

    fn variant(&self) -> Variant {
        self.agent.spec.variant
    }

    fn normalize(&mut self, x: Var) -> Var {
        match self.variant().option_norm() {
            OptionNorm::None => x,
            OptionNorm::Length => self.g.length_normalize(x),
            OptionNorm::Soft => self.g.soft_normalize(x),
        }
    }

    /// `ô(s, x)`: normalised embedding of target `x` seen from `s`.
    pub fn embed(&mut self, s: Var, x: Var, use_target: bool) -> Result<Var> {
        let input = match self.variant().embed_mode() {
            Some(EmbedMode::Pair) => self.g.concat(&[s, x])?,
            Some(EmbedMode::Displacement) => self.g.sub(x, s)?,
            None => return Err(self.agent.missing(NetId::Phi)),
        };
        let raw = self.forward(NetId::Phi, use_target, input)?;
        Ok(self.normalize(raw))
    }

    /// Option normaliser applied to policy outputs (DDPGBC critic input).
    pub fn normalize_option(&mut self, x: Var) -> Var {
        self.normalize(x)
    }

    pub fn v_low_input(&mut self, s: Var, gs: Var, use_target: bool) -> Result<Var> {
        match self.variant() {
            Variant::Iql | Variant::Hiql2v | Variant::Arli => self.g.concat(&[s, gs]),
            Variant::Hiql1vr | Variant::Hiql2vr => {
                let e = self.embed(s, gs, use_target)?;
                self.g.concat(&[s, e])
            }
            Variant::Arle => self.g.sub(gs, s),
        }
    }

    /// `V_l(·)` for the variant; IQL's `V(s, g)` and HIQL1vr's single `V`.
    pub fn v_low(&mut self, s: Var, gs: Var, use_target: bool) -> Result<Var> {
        let x = self.v_low_input(s, gs, use_target)?;
        let id = match self.variant() {
            Variant::Iql | Variant::Hiql1vr => NetId::V,
            _ => NetId::Vl,
        };
        self.forward(id, use_target, x)
    }

    pub fn q_low_input(&mut self, s: Var, gs: Var, a: Var) -> Result<Var> {
        if self.variant() == Variant::Arle {
            let rel = self.g.sub(gs, s)?;
            self.g.concat(&[s, rel, a])
        } else {
            self.g.concat(&[s, gs, a])
        }
    }

    pub fn q_low(&mut self, s: Var, gs: Var, a: Var, use_target: bool) -> Result<Var> {
        let x = self.q_low_input(s, gs, a)?;
        let id = if self.variant() == Variant::Iql {
            NetId::Q
        } else {
            NetId::Ql
        };
        self.forward(id, use_target, x)
    }

    pub fn v_high(&mut self, s: Var, g: Var, use_target: bool) -> Result<Var> {
        match self.variant() {
            Variant::Iql | Variant::Hiql1vr => self.v_low(s, g, use_target),
            _ => {
                let x = self.g.concat(&[s, g])?;
                self.forward(NetId::Vh, use_target, x)
            }
        }
    }

    /// Stopgradded option target for `(s, g_s)`: the raw waypoint for
    /// HIQL2v, otherwise the online normalised embedding.
    pub fn option_target(&mut self, s: Var, gs: Var) -> Result<Var> {
        if self.variant() == Variant::Hiql2v {
            return Ok(gs);
        }
        let e = self.embed(s, gs, false)?;
        Ok(self.g.detach(e))
    }

    /// What the low-level policy conditions on. ARLi and ARLe keep the
    /// gradient path into `φ` when it is trainable in this scope.
    pub fn low_condition(&mut self, s: Var, gs: Var) -> Result<Var> {
        match self.variant() {
            Variant::Iql => Err(self.agent.missing(NetId::PiL)),
            Variant::Hiql2v => Ok(gs),
            Variant::Arli | Variant::Arle => self.embed(s, gs, false),
            Variant::Hiql1vr | Variant::Hiql2vr => self.option_target(s, gs),
        }
    }

    pub fn q_high(&mut self, s: Var, g: Var, option: Var) -> Result<Var> {
        let x = self.g.concat(&[s, g, option])?;
        self.forward(NetId::Qh, false, x)
    }
}
