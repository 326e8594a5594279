//! Tape-style reverse-mode automatic differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward pass is a single reverse sweep that
//! visits each node once. Leaves are either constants, trainable
//! parameters, or frozen parameters; frozen leaves (the "stopgrad" inputs
//! of the update rules) always receive an all-zero gradient.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug)]
enum Op {
    Constant,
    Param { trainable: bool },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Gelu(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    LayerNorm {
        gain: Var,
        shift: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Concat(Vec<Var>),
    Columns {
        x: Var,
        start: usize,
    },
    LengthNormalize {
        x: Var,
        scale: f64,
    },
    SoftNormalize {
        x: Var,
        scale: f64,
    },
    Expectile {
        x: Var,
        tau: f64,
    },
    GaussianLogProb {
        mean: Var,
        log_std: Var,
        action: Tensor,
    },
    LogSoftmaxPick {
        logits: Var,
        picks: Vec<usize>,
    },
    Softmax(Var),
    MeanAll(Var),
    SumAll(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    // LayerNorm keeps its input here; other ops reference inputs by Var.
    input: Option<Var>,
}

/// A computation graph built for one loss evaluation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; all zeros when nothing flowed into it (frozen
    /// leaves, constants, or nodes disconnected from the loss).
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn same_shape(g: &Graph, a: Var, b: Var, what: &str) -> Result<()> {
    let (sa, sb) = (g.value(a).shape(), g.value(b).shape());
    if sa != sb {
        return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            input: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Registers a parameter leaf. Frozen leaves participate in the forward
    /// pass but never receive gradient.
    pub fn param(&mut self, t: Tensor, trainable: bool) -> Var {
        self.push(t, Op::Param { trainable }, trainable)
    }

    /// A constant copy of `v`'s current value.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn is_trainable_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Param { trainable: true })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 || tb.shape().len() != 2 {
            return Err(Error::shape(format!(
                "matmul: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(ta.data(), tb.data(), &mut out, m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), ng))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.len() != tx.cols() {
            return Err(Error::shape(format!(
                "add_bias: {:?} + {:?}",
                tx.shape(),
                tb.shape()
            )));
        }
        let mut out = tx.clone();
        kernels::add_bias(out.data_mut(), tb.data());
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(out, Op::AddBias(x, bias), ng))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, c), ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        let ng = self.ng(x);
        self.push(out, Op::AddScalar(x), ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(kernels::gelu);
        let ng = self.ng(x);
        self.push(out, Op::Gelu(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let ng = self.ng(x);
        self.push(out, Op::Tanh(x), ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        let ng = self.ng(x);
        self.push(out, Op::Exp(x), ng)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let ng = self.ng(x);
        self.push(out, Op::Square(x), ng)
    }

    /// Elementwise clamp; gradient passes only where the input is strictly
    /// inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        let ng = self.ng(x);
        self.push(out, Op::Clamp(x, lo, hi), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.cols();
        if self.value(gain).len() != n || self.value(shift).len() != n {
            return Err(Error::shape(format!(
                "layer_norm: width {n} vs gain {:?}",
                self.value(gain).shape()
            )));
        }
        let rows = tx.rows();
        let mut out = vec![0.0; rows * n];
        let mut xhat = vec![0.0; rows * n];
        let mut rstd = vec![0.0; rows];
        kernels::layer_norm(
            tx.data(),
            self.value(gain).data(),
            self.value(shift).data(),
            &mut out,
            &mut xhat,
            &mut rstd,
        );
        let shape = tx.shape().to_vec();
        let ng = self.ng(x) || self.ng(gain) || self.ng(shift);
        let v = self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                gain,
                shift,
                xhat,
                rstd,
            },
            ng,
        );
        self.nodes[v.0].input = Some(x);
        Ok(v)
    }

    /// Concatenates along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&tensors)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// Feature columns `[start, start + width)`.
    pub fn columns(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + width > tx.cols() {
            return Err(Error::shape(format!(
                "columns {start}..{} of width {}",
                start + width,
                tx.cols()
            )));
        }
        let rows = tx.rows();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&tx.row(r)[start..start + width]);
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(rows, width, data)?, Op::Columns { x, start }, ng))
    }

    /// Row-wise `v / |v| * sqrt(d)`; rows below the numeric floor map to
    /// zero with zero gradient.
    pub fn length_normalize(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let d = tx.cols();
        let scale = (d as f64).sqrt();
        let mut out = tx.clone();
        for r in 0..out.rows() {
            kernels::length_normalize_row(out.row_mut(r));
        }
        let ng = self.ng(x);
        self.push(out, Op::LengthNormalize { x, scale }, ng)
    }

    /// Row-wise `v * tanh(|v|)/|v| * sqrt(d)`.
    pub fn soft_normalize(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let d = tx.cols();
        let scale = (d as f64).sqrt();
        let mut out = tx.clone();
        for r in 0..out.rows() {
            kernels::soft_normalize_row(out.row_mut(r));
        }
        let ng = self.ng(x);
        self.push(out, Op::SoftNormalize { x, scale }, ng)
    }

    /// Elementwise expectile loss `|tau - 1(x<0)| x^2`.
    pub fn expectile(&mut self, x: Var, tau: f64) -> Var {
        let out = self.value(x).map(|v| super::losses::expectile_weight(v, tau) * v * v);
        let ng = self.ng(x);
        self.push(out, Op::Expectile { x, tau }, ng)
    }

    /// Diagonal Gaussian log density of constant `action` rows, giving a
    /// `[rows, 1]` column. `log_std` is a per-dimension vector shared by
    /// every row.
    pub fn gaussian_log_prob(&mut self, mean: Var, log_std: Var, action: &Tensor) -> Result<Var> {
        let tm = self.value(mean);
        let ls = self.value(log_std);
        let k = tm.cols();
        if ls.len() != k || action.rows() != tm.rows() || action.cols() != k {
            return Err(Error::shape(format!(
                "gaussian_log_prob: mean {:?}, log_std {:?}, action {:?}",
                tm.shape(),
                ls.shape(),
                action.shape()
            )));
        }
        let rows = tm.rows();
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let (mu, a) = (tm.row(r), action.row(r));
            let mut lp = 0.0;
            for j in 0..k {
                let z = (a[j] - mu[j]) * (-ls.data()[j]).exp();
                lp += -0.5 * z * z - ls.data()[j] - HALF_LN_2PI;
            }
            out.push(lp);
        }
        let ng = self.ng(mean) || self.ng(log_std);
        Ok(self.push(
            Tensor::matrix(rows, 1, out)?,
            Op::GaussianLogProb {
                mean,
                log_std,
                action: action.clone(),
            },
            ng,
        ))
    }

    /// `log softmax(logits)[r, picks[r]]` as a `[rows, 1]` column.
    pub fn log_softmax_pick(&mut self, logits: Var, picks: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        if picks.len() != tl.rows() || picks.iter().any(|&p| p >= tl.cols()) {
            return Err(Error::shape("log_softmax_pick: picks do not index logits"));
        }
        let out: Vec<f64> = (0..tl.rows())
            .map(|r| {
                let row = tl.row(r);
                row[picks[r]] - log_sum_exp(row)
            })
            .collect();
        let rows = out.len();
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::matrix(rows, 1, out)?,
            Op::LogSoftmaxPick {
                logits,
                picks: picks.to_vec(),
            },
            ng,
        ))
    }

    pub fn softmax(&mut self, logits: Var) -> Var {
        let mut out = self.value(logits).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.ng(logits);
        self.push(out, Op::Softmax(logits), ng)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let m = self.value(x).mean();
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::MeanAll(x), ng)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), ng)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Param { .. }) {
                grads[i] = Some(g);
            }
        }
        // Frozen leaves never accumulate anything (their needs_grad is
        // false), but clear non-leaf entries so only leaf gradients remain.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Param { trainable: true }) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.ng(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape()));
        }
        f(slot.as_mut().expect("initialised"));
    }

    fn acc_elementwise(&self, grads: &mut [Option<Tensor>], v: Var, g: &Tensor, f: impl Fn(usize, f64) -> f64) {
        self.acc(grads, v, |t| {
            for (i, (dst, &gi)) in t.data_mut().iter_mut().zip(g.data()).enumerate() {
                *dst += f(i, gi);
            }
        });
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Constant | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                self.acc(grads, *a, |da| {
                    kernels::matmul_grad_lhs(g.data(), tb.data(), da.data_mut(), m, k, n)
                });
                self.acc(grads, *b, |db| {
                    kernels::matmul_grad_rhs(ta.data(), g.data(), db.data_mut(), m, k, n)
                });
            }
            Op::AddBias(x, b) => {
                self.acc_elementwise(grads, *x, g, |_, gi| gi);
                self.acc(grads, *b, |db| {
                    let n = db.len();
                    for row in g.data().chunks_exact(n) {
                        for (d, r) in db.data_mut().iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc_elementwise(grads, *a, g, |_, gi| gi);
                self.acc_elementwise(grads, *b, g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                self.acc_elementwise(grads, *a, g, |_, gi| gi);
                self.acc_elementwise(grads, *b, g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                self.acc_elementwise(grads, *a, g, |j, gi| gi * tb[j]);
                self.acc_elementwise(grads, *b, g, |j, gi| gi * ta[j]);
            }
            Op::Scale(x, c) => self.acc_elementwise(grads, *x, g, |_, gi| gi * c),
            Op::AddScalar(x) => self.acc_elementwise(grads, *x, g, |_, gi| gi),
            Op::Gelu(x) => {
                let tx = self.value(*x).data();
                self.acc_elementwise(grads, *x, g, |j, gi| gi * kernels::gelu_grad(tx[j]));
            }
            Op::Tanh(x) => {
                let out = node.value.data();
                self.acc_elementwise(grads, *x, g, |j, gi| gi * (1.0 - out[j] * out[j]));
            }
            Op::Exp(x) => {
                let out = node.value.data();
                self.acc_elementwise(grads, *x, g, |j, gi| gi * out[j]);
            }
            Op::Square(x) => {
                let tx = self.value(*x).data();
                self.acc_elementwise(grads, *x, g, |j, gi| 2.0 * gi * tx[j]);
            }
            Op::Clamp(x, lo, hi) => {
                let tx = self.value(*x).data();
                self.acc_elementwise(grads, *x, g, |j, gi| {
                    if tx[j] > *lo && tx[j] < *hi {
                        gi
                    } else {
                        0.0
                    }
                });
            }
            Op::LayerNorm {
                gain,
                shift,
                xhat,
                rstd,
            } => {
                let x = node.input.expect("layer norm input");
                let n = self.value(*gain).len();
                let gn = self.value(*gain).data();
                self.acc(grads, *gain, |dg| {
                    for (grow, hrow) in g.data().chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            dg.data_mut()[j] += grow[j] * hrow[j];
                        }
                    }
                });
                self.acc(grads, *shift, |ds| {
                    for grow in g.data().chunks_exact(n) {
                        for j in 0..n {
                            ds.data_mut()[j] += grow[j];
                        }
                    }
                });
                self.acc(grads, x, |dx| {
                    let rows = rstd.len();
                    for r in 0..rows {
                        let base = r * n;
                        let grow = &g.data()[base..base + n];
                        let hrow = &xhat[base..base + n];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..n {
                            let dh = grow[j] * gn[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hrow[j];
                        }
                        let inv_n = 1.0 / n as f64;
                        for j in 0..n {
                            let dh = grow[j] * gn[j];
                            dx.data_mut()[base + j] +=
                                rstd[r] * (dh - inv_n * sum_dh - hrow[j] * inv_n * sum_dh_h);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.acc(grads, p, |dp| {
                        for r in 0..rows {
                            let src = &g.row(r)[offset..offset + w];
                            for (d, s) in dp.row_mut(r).iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Columns { x, start } => {
                let w = g.cols();
                self.acc(grads, *x, |dx| {
                    for r in 0..g.rows() {
                        let dst = &mut dx.row_mut(r)[*start..*start + w];
                        for (d, s) in dst.iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                });
            }
            Op::LengthNormalize { x, scale } => {
                let tx = self.value(*x);
                self.acc(grads, *x, |dx| {
                    for r in 0..tx.rows() {
                        let v = tx.row(r);
                        let n = kernels::norm(v);
                        if n < kernels::NORM_FLOOR {
                            continue;
                        }
                        let gr = g.row(r);
                        let vg: f64 = v.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let dst = dx.row_mut(r);
                        for j in 0..v.len() {
                            dst[j] += scale / n * (gr[j] - vg * v[j] / (n * n));
                        }
                    }
                });
            }
            Op::SoftNormalize { x, scale } => {
                let tx = self.value(*x);
                self.acc(grads, *x, |dx| {
                    for r in 0..tx.rows() {
                        let v = tx.row(r);
                        let n = kernels::norm(v);
                        let f = kernels::tanh_over(n);
                        let fr = kernels::tanh_over_grad_div_r(n);
                        let gr = g.row(r);
                        let vg: f64 = v.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let dst = dx.row_mut(r);
                        for j in 0..v.len() {
                            dst[j] += scale * (f * gr[j] + fr * vg * v[j]);
                        }
                    }
                });
            }
            Op::Expectile { x, tau } => {
                let tx = self.value(*x).data();
                self.acc_elementwise(grads, *x, g, |j, gi| {
                    2.0 * gi * super::losses::expectile_weight(tx[j], *tau) * tx[j]
                });
            }
            Op::GaussianLogProb {
                mean,
                log_std,
                action,
            } => {
                let tm = self.value(*mean);
                let ls = self.value(*log_std).data();
                let k = tm.cols();
                let inv_std: Vec<f64> = ls.iter().map(|l| (-l).exp()).collect();
                self.acc(grads, *mean, |dm| {
                    for r in 0..tm.rows() {
                        let gr = g.data()[r];
                        let (mu, a) = (tm.row(r), action.row(r));
                        let dst = dm.row_mut(r);
                        for j in 0..k {
                            let z = (a[j] - mu[j]) * inv_std[j];
                            dst[j] += gr * z * inv_std[j];
                        }
                    }
                });
                self.acc(grads, *log_std, |dl| {
                    for r in 0..tm.rows() {
                        let gr = g.data()[r];
                        let (mu, a) = (tm.row(r), action.row(r));
                        for j in 0..k {
                            let z = (a[j] - mu[j]) * inv_std[j];
                            dl.data_mut()[j] += gr * (z * z - 1.0);
                        }
                    }
                });
            }
            Op::LogSoftmaxPick { logits, picks } => {
                let tl = self.value(*logits);
                self.acc(grads, *logits, |dl| {
                    for r in 0..tl.rows() {
                        let mut p = tl.row(r).to_vec();
                        softmax_in_place(&mut p);
                        let gr = g.data()[r];
                        let dst = dl.row_mut(r);
                        for j in 0..p.len() {
                            let onehot = if j == picks[r] { 1.0 } else { 0.0 };
                            dst[j] += gr * (onehot - p[j]);
                        }
                    }
                });
            }
            Op::Softmax(logits) => {
                let out = &node.value;
                self.acc(grads, *logits, |dl| {
                    for r in 0..out.rows() {
                        let (s, gr) = (out.row(r), g.row(r));
                        let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let dst = dl.row_mut(r);
                        for j in 0..s.len() {
                            dst[j] += s[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::MeanAll(x) => {
                let count = self.value(*x).len().max(1) as f64;
                let gi = g.data()[0] / count;
                self.acc(grads, *x, |dx| dx.data_mut().iter_mut().for_each(|d| *d += gi));
            }
            Op::SumAll(x) => {
                let gi = g.data()[0];
                self.acc(grads, *x, |dx| dx.data_mut().iter_mut().for_each(|d| *d += gi));
            }
        }
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
