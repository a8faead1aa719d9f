//! Binomial and sample-mean summaries used by the Monte Carlo harness.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, lo: f64, hi: f64) -> bool {
        self.lo <= hi && lo <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }
}

/// Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> Interval {
    if trials == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let p = hits.min(trials) as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let margin = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - margin).clamp(0.0, 1.0) };
    let hi = if hits >= trials { 1.0 } else { (center + margin).clamp(0.0, 1.0) };
    Interval { lo, hi }
}

/// Point estimate with its Wilson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Proportion {
    pub fn new(hits: u64, trials: u64) -> Self {
        Self::with_z(hits, trials, Z_95)
    }

    pub fn with_z(hits: u64, trials: u64, z: f64) -> Self {
        let ci = wilson_interval(hits, trials, z);
        let estimate = if trials == 0 { 0.0 } else { hits as f64 / trials as f64 };
        Proportion { hits, trials, estimate, ci_lo: ci.lo, ci_hi: ci.hi }
    }

    pub fn interval(&self) -> Interval {
        Interval { lo: self.ci_lo, hi: self.ci_hi }
    }
}

/// Sample mean with a normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_dev: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: usize,
}

pub fn mean_estimate(values: &[f64], z: f64) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate { mean: f64::NAN, std_dev: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN, count: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let sd = var.sqrt();
    let half = z * sd / (n as f64).sqrt();
    MeanEstimate { mean, std_dev: sd, ci_lo: mean - half, ci_hi: mean + half, count: n }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
