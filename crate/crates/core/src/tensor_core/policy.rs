//! Policy heads: diagonal Gaussian with a global per-dimension `log_std`,
//! or categorical over a finite action set.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::graph::{softmax_in_place, Graph, Var};
use super::mlp::{Bound, FinalInit, NetBundle};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Gaussian,
    Categorical,
}

/// A policy network. For Gaussian heads the network outputs the mean and
/// `log_std` is a separate trainable vector; categorical heads output
/// logits and carry an empty `log_std`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHead {
    pub net: NetBundle,
    pub log_std: Tensor,
    kind: HeadKind,
}

/// Graph leaves for a [`PolicyHead`].
#[derive(Clone, Debug)]
pub struct PolicyBound {
    pub net: Bound,
    pub log_std: Option<Var>,
}

/// Graph outputs of a policy head.
#[derive(Clone, Copy, Debug)]
pub struct PolicyOut {
    /// Mean (Gaussian) or logits (categorical).
    pub head: Var,
    pub log_std: Option<Var>,
}

impl PolicyHead {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        kind: HeadKind,
        layer_norm: bool,
        rng: &mut Stream,
    ) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let net = NetBundle::new(&sizes, layer_norm, FinalInit::Zero, rng)?;
        let log_std = match kind {
            HeadKind::Gaussian => Tensor::zeros(&[output_dim]),
            HeadKind::Categorical => Tensor::zeros(&[0]),
        };
        Ok(Self { net, log_std, kind })
    }

    pub fn from_parts(net: NetBundle, log_std: Tensor, kind: HeadKind) -> Result<Self> {
        let want = match kind {
            HeadKind::Gaussian => net.output_dim(),
            HeadKind::Categorical => 0,
        };
        if log_std.len() != want {
            return Err(Error::shape("log_std length does not match head"));
        }
        Ok(Self { net, log_std, kind })
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Trainable tensors in optimizer order.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        let extra = (self.kind == HeadKind::Gaussian).then_some(&self.log_std);
        self.net.online.iter().chain(extra)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        let extra = (self.kind == HeadKind::Gaussian).then_some(&mut self.log_std);
        self.net.online.iter_mut().chain(extra)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> PolicyBound {
        let net = self.net.bind(g, false, trainable);
        let log_std = (self.kind == HeadKind::Gaussian).then(|| g.param(self.log_std.clone(), trainable));
        PolicyBound { net, log_std }
    }

    /// Gradients for [`params`](Self::params) from a backward pass.
    pub fn grads(bound: &PolicyBound, grads: &super::graph::Gradients) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = bound.net.vars().iter().map(|&v| grads.get(v)).collect();
        if let Some(ls) = bound.log_std {
            out.push(grads.get(ls));
        }
        out
    }

    pub fn forward_graph(&self, g: &mut Graph, bound: &PolicyBound, x: Var) -> Result<PolicyOut> {
        let head = self.net.forward_graph(g, &bound.net, x)?;
        Ok(PolicyOut {
            head,
            log_std: bound.log_std,
        })
    }

    /// Log-likelihood column of constant targets. Gaussian targets are
    /// `[rows, k]` actions; categorical targets are one-hot rows.
    pub fn log_prob_graph(&self, g: &mut Graph, out: PolicyOut, target: &Tensor) -> Result<Var> {
        match self.kind {
            HeadKind::Gaussian => {
                let ls = out.log_std.expect("gaussian head binds log_std");
                g.gaussian_log_prob(out.head, ls, target)
            }
            HeadKind::Categorical => {
                let picks = one_hot_indices(target)?;
                g.log_softmax_pick(out.head, &picks)
            }
        }
    }

    /// The action fed to a critic: the mean (Gaussian) or the softmax
    /// probabilities (categorical).
    pub fn critic_action_graph(&self, g: &mut Graph, out: PolicyOut) -> Var {
        match self.kind {
            HeadKind::Gaussian => out.head,
            HeadKind::Categorical => g.softmax(out.head),
        }
    }

    /// Keeps `log_std` inside its clamp range.
    pub fn project(&mut self) {
        for v in self.log_std.data_mut() {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Mean action or most likely class (one-hot) per row.
    pub fn mode(&self, x: &Tensor) -> Result<Tensor> {
        let head = self.net.forward(x, false)?;
        match self.kind {
            HeadKind::Gaussian => Ok(head),
            HeadKind::Categorical => {
                let mut out = Tensor::zeros(head.shape());
                for r in 0..head.rows() {
                    let i = argmax(head.row(r));
                    out.row_mut(r)[i] = 1.0;
                }
                Ok(out)
            }
        }
    }

    /// Draws one action per row.
    pub fn sample(&self, x: &Tensor, rng: &mut Stream) -> Result<Tensor> {
        let mut head = self.net.forward(x, false)?;
        match self.kind {
            HeadKind::Gaussian => {
                let k = head.cols();
                for r in 0..head.rows() {
                    let row = head.row_mut(r);
                    for j in 0..k {
                        let z: f64 = StandardNormal.sample(rng);
                        row[j] += self.log_std.data()[j].exp() * z;
                    }
                }
                Ok(head)
            }
            HeadKind::Categorical => {
                let mut out = Tensor::zeros(head.shape());
                for r in 0..head.rows() {
                    let p = head.row_mut(r);
                    softmax_in_place(p);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = p.len() - 1;
                    for (j, pj) in p.iter().enumerate() {
                        acc += pj;
                        if u < acc {
                            pick = j;
                            break;
                        }
                    }
                    out.row_mut(r)[pick] = 1.0;
                }
                Ok(out)
            }
        }
    }
}

/// Lowest index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn one_hot_indices(target: &Tensor) -> Result<Vec<usize>> {
    (0..target.rows())
        .map(|r| {
            let row = target.row(r);
            let hot: Vec<usize> = (0..row.len()).filter(|&j| row[j] != 0.0).collect();
            match hot.as_slice() {
                [j] if row[*j] == 1.0 => Ok(*j),
                _ => Err(Error::shape(format!("row {r} of a categorical target is not one-hot"))),
            }
        })
        .collect()
}
