//! Feed-forward networks with Polyak-averaged target copies.
//!
//! Hidden layers are `Dense -> GELU -> LayerNorm` (layer norm optional);
//! the final layer is a plain affine map.

use rand_distr::{Distribution, StandardNormal};

use super::graph::{Graph, Var};
use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// How the final layer's weights are initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalInit {
    Orthogonal,
    /// Zero weights and bias, used for policy-mean outputs.
    Zero,
}

/// Parameters of one MLP plus its target copy.
#[derive(Clone, Debug, PartialEq)]
pub struct NetBundle {
    layer_sizes: Vec<usize>,
    layer_norm: bool,
    pub online: Vec<Tensor>,
    pub target: Vec<Tensor>,
}

/// Graph leaves for one parameter set of a [`NetBundle`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// A `[rows, cols]` matrix with orthonormal rows or columns (whichever is
/// shorter), scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Stream) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // Columns of a tall x short Gaussian matrix, orthonormalised.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(short);
    while q.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for u in &q {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let n = kernels::norm(&v);
        if n > 1e-10 {
            v.iter_mut().for_each(|a| *a /= n);
            q.push(v);
        }
    }
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = gain * if rows >= cols { q[c][r] } else { q[r][c] };
        }
    }
    Tensor::matrix(rows, cols, data).expect("sized buffer")
}

fn layer_shapes(layer_sizes: &[usize], layer_norm: bool) -> Vec<Vec<usize>> {
    let layers = layer_sizes.len() - 1;
    let mut shapes = Vec::new();
    for i in 0..layers {
        shapes.push(vec![layer_sizes[i], layer_sizes[i + 1]]);
        shapes.push(vec![layer_sizes[i + 1]]);
        if layer_norm && i + 1 < layers {
            shapes.push(vec![layer_sizes[i + 1]]);
            shapes.push(vec![layer_sizes[i + 1]]);
        }
    }
    shapes
}

impl NetBundle {
    /// `layer_sizes` lists the input width, every hidden width and the output
    /// width. The target copy starts bit-identical to the online set.
    pub fn new(
        layer_sizes: &[usize],
        layer_norm: bool,
        final_init: FinalInit,
        rng: &mut Stream,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let layers = layer_sizes.len() - 1;
        let mut online = Vec::new();
        for i in 0..layers {
            let (fan_in, fan_out) = (layer_sizes[i], layer_sizes[i + 1]);
            let last = i + 1 == layers;
            let w = if last && final_init == FinalInit::Zero {
                Tensor::zeros(&[fan_in, fan_out])
            } else {
                orthogonal(fan_in, fan_out, 1.0, rng)
            };
            online.push(w);
            online.push(Tensor::zeros(&[fan_out]));
            if layer_norm && !last {
                online.push(Tensor::filled(&[fan_out], 1.0));
                online.push(Tensor::zeros(&[fan_out]));
            }
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layer_norm,
            target: online.clone(),
            online,
        })
    }

    /// Rebuilds a bundle from stored parameter sets, validating every shape.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        layer_norm: bool,
        online: Vec<Tensor>,
        target: Vec<Tensor>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::shape("network needs at least two layer sizes"));
        }
        let shapes = layer_shapes(&layer_sizes, layer_norm);
        for set in [&online, &target] {
            if set.len() != shapes.len()
                || set.iter().zip(&shapes).any(|(t, s)| t.shape() != s.as_slice())
            {
                return Err(Error::shape(format!(
                    "parameter set does not match layer sizes {layer_sizes:?}"
                )));
            }
        }
        Ok(Self {
            layer_sizes,
            layer_norm,
            online,
            target,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn uses_layer_norm(&self) -> bool {
        self.layer_norm
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty")
    }

    pub fn params(&self, use_target: bool) -> &[Tensor] {
        if use_target {
            &self.target
        } else {
            &self.online
        }
    }

    pub fn param_count(&self) -> usize {
        self.online.iter().map(Tensor::len).sum()
    }

    /// Adds one parameter set as graph leaves. Target parameters and
    /// `trainable = false` bindings are frozen.
    pub fn bind(&self, g: &mut Graph, use_target: bool, trainable: bool) -> Bound {
        let vars = self
            .params(use_target)
            .iter()
            .map(|t| g.param(t.clone(), trainable && !use_target))
            .collect();
        Bound { vars }
    }

    /// Forward pass inside a graph.
    pub fn forward_graph(&self, g: &mut Graph, bound: &Bound, x: Var) -> Result<Var> {
        if g.value(x).cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "net expects width {}, got {:?}",
                self.input_dim(),
                g.value(x).shape()
            )));
        }
        let layers = self.layer_sizes.len() - 1;
        let mut h = x;
        let mut k = 0;
        for i in 0..layers {
            let w = bound.vars[k];
            let b = bound.vars[k + 1];
            k += 2;
            h = g.matmul(h, w)?;
            h = g.add_bias(h, b)?;
            if i + 1 < layers {
                h = g.gelu(h);
                if self.layer_norm {
                    h = g.layer_norm(h, bound.vars[k], bound.vars[k + 1])?;
                    k += 2;
                }
            }
        }
        Ok(h)
    }

    /// Forward pass without a graph. Produces bit-identical values to
    /// [`forward_graph`](Self::forward_graph).
    pub fn forward(&self, x: &Tensor, use_target: bool) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "net expects width {}, got {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        let params = self.params(use_target);
        let layers = self.layer_sizes.len() - 1;
        let rows = x.rows();
        let mut h = x.data().to_vec();
        let mut k = 0;
        for i in 0..layers {
            let (fan_in, fan_out) = (self.layer_sizes[i], self.layer_sizes[i + 1]);
            let mut out = vec![0.0; rows * fan_out];
            kernels::matmul(&h, params[k].data(), &mut out, rows, fan_in, fan_out);
            kernels::add_bias(&mut out, params[k + 1].data());
            k += 2;
            if i + 1 < layers {
                out.iter_mut().for_each(|v| *v = kernels::gelu(*v));
                if self.layer_norm {
                    let mut normed = vec![0.0; rows * fan_out];
                    let mut xhat = vec![0.0; rows * fan_out];
                    let mut rstd = vec![0.0; rows];
                    kernels::layer_norm(
                        &out,
                        params[k].data(),
                        params[k + 1].data(),
                        &mut normed,
                        &mut xhat,
                        &mut rstd,
                    );
                    out = normed;
                    k += 2;
                }
            }
            h = out;
        }
        Tensor::matrix(rows, self.output_dim(), h)
    }

    /// `target <- (1 - rate) target + rate online`.
    pub fn polyak_update(&mut self, rate: f64) {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
                *tv = (1.0 - rate) * *tv + rate * ov;
            }
        }
    }
}

/// Free-function form of [`NetBundle::forward`].
pub fn mlp_forward(net: &NetBundle, x: &Tensor, use_target: bool) -> Result<Tensor> {
    net.forward(x, use_target)
}
