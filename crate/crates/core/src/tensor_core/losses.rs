//! Scalar losses and option normalizers (single-vector forms).
//!
//! The graph versions in [`super::graph`] share the formulas below; these
//! standalone functions serve deployment-time code and tests.

use super::kernels;
use crate::error::{Error, Result};

pub use super::kernels::NORM_FLOOR;

pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("expectile level {tau} not in (0,1)")))
    }
}

#[inline]
pub fn expectile_weight(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// `|tau - 1(x<0)| x^2`.
pub fn expectile_loss(x: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(expectile_weight(x, tau) * x * x)
}

/// Result of [`length_normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// Set when the input norm fell below [`NORM_FLOOR`] and the zero
    /// vector was returned instead.
    pub degenerate: bool,
}

fn check_dim(v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::shape(format!(
            "vector of length {} for embedding dimension {d}",
            v.len()
        )));
    }
    Ok(())
}

/// `v / |v| * sqrt(d)`.
pub fn length_normalize(v: &[f64], d: usize) -> Result<Normalized> {
    check_dim(v, d)?;
    let mut values = v.to_vec();
    let ok = kernels::length_normalize_row(&mut values);
    Ok(Normalized {
        values,
        degenerate: !ok,
    })
}

/// `v * tanh(|v|)/|v| * sqrt(d)`, zero at the origin.
pub fn soft_normalize(v: &[f64], d: usize) -> Result<Vec<f64>> {
    check_dim(v, d)?;
    let mut out = v.to_vec();
    kernels::soft_normalize_row(&mut out);
    Ok(out)
}

/// Diagonal Gaussian log density.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> Result<f64> {
    if mean.len() != log_std.len() || mean.len() != action.len() {
        return Err(Error::shape("gaussian_log_prob: dimension mismatch"));
    }
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    Ok(mean
        .iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, l), a)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - half_ln_2pi
        })
        .sum())
}
