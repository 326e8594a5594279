//! Percentile bootstrap over seed-level means.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Percentile interval of the bootstrap distribution of the mean of
/// `means`.
pub fn bootstrap_means(means: &[f64], resamples: usize, level: f64, rng: &mut Stream) -> Result<(f64, f64)> {
    if means.is_empty() {
        return Err(Error::usage("bootstrap needs at least one group"));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::config("bootstrap needs resamples >= 1 and level in (0,1)"));
    }
    let k = means.len();
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| (0..k).map(|_| means[rng.random_range(0..k)]).sum::<f64>() / k as f64)
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let m = mean(means);
    // Clamped so the interval always contains the sample mean.
    let low = quantile(&stats, tail).min(m);
    let high = quantile(&stats, 1.0 - tail).max(m);
    Ok((low, high))
}

/// Bootstrap CI of binary outcomes grouped by seed.
pub fn bootstrap_ci(groups: &[Vec<bool>], resamples: usize, level: f64, rng: &mut Stream) -> Result<(f64, f64)> {
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(Error::usage("bootstrap needs at least one non-empty group"));
    }
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().filter(|&&b| b).count() as f64 / g.len() as f64)
        .collect();
    bootstrap_means(&means, resamples, level, rng)
}
