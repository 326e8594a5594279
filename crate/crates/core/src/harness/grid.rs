//! Value grids over a 2-D maze.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::envs::MazeSpec;
use crate::error::{Error, Result};
use crate::tensor_core::Tensor;

/// What stays fixed while the state sweeps the maze.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridTarget {
    /// `V_h(s, g)`.
    Goal([f64; 2]),
    /// `V_l(s, g_s)`.
    Waypoint([f64; 2]),
}

/// Row-major grid (`iy * nx + ix`) of values and central-difference
/// gradient magnitudes. Wall points are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub target: GridTarget,
    pub nx: usize,
    pub ny: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub grad: Vec<Option<f64>>,
}

impl ValueGrid {
    pub fn at(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[iy * self.nx + ix]
    }

    /// Index `(ix, iy)` of the largest value.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| (i % self.nx, i / self.nx))
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let (kind, p) = match self.target {
            GridTarget::Goal(p) => ("goal", p),
            GridTarget::Waypoint(p) => ("waypoint", p),
        };
        writeln!(out, "# {kind}={},{} nx={} ny={}", p[0], p[1], self.nx, self.ny)?;
        writeln!(out, "x,y,value,grad")?;
        let field = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let i = iy * self.nx + ix;
                writeln!(
                    out,
                    "{},{},{},{}",
                    self.xs[ix],
                    self.ys[iy],
                    field(self.values[i]),
                    field(self.grad[i])
                )?;
            }
        }
        Ok(())
    }
}

fn check_2d(agent: &Agent) -> Result<()> {
    if agent.state_dim() != 2 {
        return Err(Error::Unsupported(format!(
            "value grids need 2-D positions, agent has state dimension {}",
            agent.state_dim()
        )));
    }
    Ok(())
}

fn evaluate_pairs(agent: &Agent, target: GridTarget, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Ok(vec![]);
    }
    let s = Tensor::matrix(points.len(), 2, points.iter().flatten().copied().collect())?;
    let (fixed, high) = match target {
        GridTarget::Goal(p) => (p, true),
        GridTarget::Waypoint(p) => (p, false),
    };
    let g = Tensor::matrix(points.len(), 2, points.iter().flat_map(|_| fixed).collect())?;
    let v = if high {
        agent.high_value(&s, &g)?
    } else {
        agent.low_value(&s, &g)?
    };
    Ok(v.into_data())
}

/// Samples the value at `nx x ny` evenly spaced points over the maze.
pub fn dump_value_grid(agent: &Agent, env: &MazeSpec, target: GridTarget, resolution: (usize, usize)) -> Result<ValueGrid> {
    check_2d(agent)?;
    let (nx, ny) = resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::config("grid resolution must be at least 2x2"));
    }
    let hx = env.width as f64 / nx as f64;
    let hy = env.height as f64 / ny as f64;
    let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * hx).collect();
    let ys: Vec<f64> = (0..ny).map(|i| (i as f64 + 0.5) * hy).collect();
    let mut free = Vec::new();
    let mut points = Vec::new();
    for &y in &ys {
        for &x in &xs {
            let ok = env.point_is_free([x, y]);
            free.push(ok);
            if ok {
                points.push([x, y]);
            }
        }
    }
    let mut vals = evaluate_pairs(agent, target, &points)?.into_iter();
    let values: Vec<Option<f64>> = free.iter().map(|&ok| if ok { vals.next() } else { None }).collect();
    let at = |ix: isize, iy: isize| -> Option<f64> {
        if ix < 0 || iy < 0 || ix >= nx as isize || iy >= ny as isize {
            None
        } else {
            values[iy as usize * nx + ix as usize]
        }
    };
    let diff = |lo: Option<f64>, mid: f64, hi: Option<f64>, h: f64| match (lo, hi) {
        (Some(a), Some(b)) => Some((b - a) / (2.0 * h)),
        (None, Some(b)) => Some((b - mid) / h),
        (Some(a), None) => Some((mid - a) / h),
        (None, None) => None,
    };
    let mut grad = vec![None; nx * ny];
    for iy in 0..ny as isize {
        for ix in 0..nx as isize {
            let Some(v) = at(ix, iy) else { continue };
            let dx = diff(at(ix - 1, iy), v, at(ix + 1, iy), hx);
            let dy = diff(at(ix, iy - 1), v, at(ix, iy + 1), hy);
            grad[iy as usize * nx + ix as usize] = match (dx, dy) {
                (Some(a), Some(b)) => Some(a.hypot(b)),
                (Some(a), None) | (None, Some(a)) => Some(a.abs()),
                (None, None) => None,
            };
        }
    }
    Ok(ValueGrid {
        target,
        nx,
        ny,
        xs,
        ys,
        values,
        grad,
    })
}

/// For each displacement `δ` (in cells), the population variance of
/// `V_l(s, s + δ)` over every free cell centre `s` whose translate is also
/// free. Returns the largest variance over `displacements`.
pub fn translated_value_spread(agent: &Agent, env: &MazeSpec, displacements: &[[i64; 2]]) -> Result<f64> {
    check_2d(agent)?;
    let mut worst: f64 = 0.0;
    for d in displacements {
        let mut s = Vec::new();
        let mut gs = Vec::new();
        for c in env.free_cells() {
            let p = c.center();
            let q = [p[0] + d[0] as f64, p[1] + d[1] as f64];
            if env.point_is_free(q) {
                s.extend_from_slice(&p);
                gs.extend_from_slice(&q);
            }
        }
        let k = s.len() / 2;
        if k < 2 {
            continue;
        }
        let v = agent.low_value(&Tensor::matrix(k, 2, s)?, &Tensor::matrix(k, 2, gs)?)?;
        // Shifted by the first value, so identical values give exactly zero.
        let x0 = v.data()[0];
        let dev: Vec<f64> = v.data().iter().map(|x| x - x0).collect();
        let m = dev.iter().sum::<f64>() / k as f64;
        let var = (dev.iter().map(|x| x * x).sum::<f64>() / k as f64 - m * m).max(0.0);
        worst = worst.max(var);
    }
    Ok(worst)
}
