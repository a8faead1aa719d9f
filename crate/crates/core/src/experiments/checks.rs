use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use crate::ensembles::{sample_matrix, sample_matrix_in, EntryDistribution, Lane, SeedSpec};
use crate::error::{Error, Result};
use crate::linalg::{norm2, operator_norm, Matrix};
use crate::parallel::Execution;
use crate::stats::Proportion;

use super::check_grid;

/// The fixed `N x N` matrix `A`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecouplingMatrix {
    #[default]
    Identity,
    /// Gaussian entries scaled by `1/sqrt(N)`, drawn once per run.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecouplingConfig {
    pub n_rows: usize,
    pub m: usize,
    pub dist: EntryDistribution,
    pub a_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub matrix: DecouplingMatrix,
}

impl DecouplingConfig {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if self.n_rows == 0 || self.m == 0 || self.trials == 0 {
            return Err(Error::InvalidParameter("n_rows, m and trials must be positive".into()));
        }
        check_grid(&self.a_grid)?;
        check_grid(&self.b_grid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingPoint {
    pub a: f64,
    pub b: f64,
    /// `P(|AXz| < a, |AX| > b)`.
    pub lhs: Proportion,
    /// `P(|AXy| < sqrt(2) a / K1)` for the worse of `y = z` and `y = e_1`.
    pub small_ball: Proportion,
    /// `P(|AX| > b / sqrt(2))`.
    pub large_norm: Proportion,
    pub rhs: f64,
    /// `2` times the product of the upper confidence limits.
    pub rhs_hi: f64,
    /// `lhs.ci_lo <= rhs_hi`.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingResult {
    pub k1: f64,
    /// Pairs with `0 < a < b`; others are skipped.
    pub points: Vec<DecouplingPoint>,
    pub satisfaction_rate: f64,
}

struct DecouplingSample {
    xz: f64,
    xe1: f64,
    op: f64,
}

/// Monte Carlo of both sides of the decoupling inequality with `v = u = 0`
/// and `z = (1, ..., 1)/sqrt(m)`. The supremum on the right is replaced by a
/// maximum over `{z, e_1}`, which can only shrink the right side.
pub fn decoupling_check(cfg: &DecouplingConfig, exec: Execution) -> Result<DecouplingResult> {
    cfg.validate()?;
    let (n, m) = (cfg.n_rows, cfg.m);
    let seed = SeedSpec::new(cfg.master_seed, 0);
    let a_mat = match cfg.matrix {
        DecouplingMatrix::Identity => Matrix::identity(n),
        DecouplingMatrix::Gaussian => {
            let g = sample_matrix_in(n, n, &[EntryDistribution::Gaussian], SeedSpec::new(cfg.master_seed, u64::MAX), Lane::RotationU);
            g.scale(1.0 / (n as f64).sqrt())
        }
    };
    let z = vec![1.0 / (m as f64).sqrt(); m];
    let k1 = z.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min) * (m as f64).sqrt();
    let mut e1 = vec![0.0; m];
    e1[0] = 1.0;

    let samples: Vec<DecouplingSample> = exec
        .map(cfg.trials as usize, |t| {
            let ax = &a_mat * &sample_matrix(n, m, &cfg.dist, seed.trial(t as u64));
            Ok(DecouplingSample { xz: norm2(&ax.mul_vec(&z)), xe1: norm2(&ax.mul_vec(&e1)), op: operator_norm(&ax)? })
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let trials = cfg.trials;
    let count = |pred: &dyn Fn(&DecouplingSample) -> bool| samples.iter().filter(|s| pred(s)).count() as u64;
    let mut points = Vec::new();
    for &a in &cfg.a_grid {
        for &b in &cfg.b_grid {
            if !(0.0 < a && a < b) {
                continue;
            }
            let lhs = Proportion::new(count(&|s| s.xz < a && s.op > b), trials);
            let r = 2f64.sqrt() * a / k1;
            let via_z = Proportion::new(count(&|s| s.xz < r), trials);
            let via_e1 = Proportion::new(count(&|s| s.xe1 < r), trials);
            let small_ball = if via_e1.hits > via_z.hits { via_e1 } else { via_z };
            let large_norm = Proportion::new(count(&|s| s.op > b / 2f64.sqrt()), trials);
            let rhs = 2.0 * small_ball.estimate * large_norm.estimate;
            let rhs_hi = 2.0 * small_ball.ci_hi * large_norm.ci_hi;
            points.push(DecouplingPoint { a, b, lhs, small_ball, large_norm, rhs, rhs_hi, holds: lhs.ci_lo <= rhs_hi });
        }
    }
    let satisfaction_rate =
        if points.is_empty() { 1.0 } else { points.iter().filter(|p| p.holds).count() as f64 / points.len() as f64 };
    Ok(DecouplingResult { k1, points, satisfaction_rate })
}

/// Nonnegative laws `zeta` with a known small-ball constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaLaw {
    /// `|g|`, `P(|g| < e) <= sqrt(2/pi) e`.
    AbsGaussian,
    /// Uniform on `[0, 1]`, `P(U < e) = e`.
    Uniform01,
    /// `0` with probability `mu`, else `1`.
    Bernoulli { mu: f64 },
}

impl ZetaLaw {
    /// `B` with `P(zeta < e) <= B e`; `None` when no such linear bound holds.
    pub fn small_ball_constant(&self) -> Option<f64> {
        match self {
            ZetaLaw::AbsGaussian => Some((2.0 / std::f64::consts::PI).sqrt()),
            ZetaLaw::Uniform01 => Some(1.0),
            ZetaLaw::Bernoulli { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ZetaLaw::Bernoulli { mu } if !(*mu > 0.0 && *mu < 1.0) => {
                Err(Error::InvalidParameter(format!("Bernoulli mu = {mu} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    fn draw<R: RngCore>(&self, rng: &mut R) -> f64 {
        let unit = |rng: &mut R| (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        match self {
            ZetaLaw::AbsGaussian => EntryDistribution::Gaussian.draw(rng).abs(),
            ZetaLaw::Uniform01 => unit(rng),
            ZetaLaw::Bernoulli { mu } => {
                if unit(rng) < *mu {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorizationConfig {
    pub laws: Vec<ZetaLaw>,
    pub n_grid: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
}

impl TensorizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.laws.is_empty() || self.n_grid.is_empty() || self.trials == 0 {
            return Err(Error::InvalidParameter("laws, n_grid and trials must be nonempty".into()));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::InvalidParameter("n = 0 in n_grid".into()));
        }
        if self.laws.len() >= 1 << 16 || self.n_grid.len() > 64 {
            return Err(Error::InvalidParameter("at most 65535 laws and 64 values of n".into()));
        }
        self.laws.iter().try_for_each(|l| l.validate())?;
        check_grid(&self.epsilon_grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorizationPartOne {
    pub law: ZetaLaw,
    pub n: usize,
    pub epsilon: f64,
    pub b: f64,
    /// `P(sum zeta_k^2 < epsilon^2 n)`.
    pub estimate: Proportion,
    /// Exact value for `|g|` (chi-square with `n` degrees of freedom).
    pub exact: Option<f64>,
    /// `p^{1/n} / (B epsilon)`, the smallest `C` reproducing the estimate.
    pub fitted_c: f64,
    /// Same with the upper confidence limit in place of `p`.
    pub fitted_c_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorizationPartTwo {
    pub law: ZetaLaw,
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
    pub lambda1: f64,
    /// `P(sum zeta_k^2 < lambda1 n)`.
    pub estimate: Proportion,
    pub exact: f64,
    /// `p^{1/n}` from the exact probability.
    pub mu1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorizationResult {
    pub part_one: Vec<TensorizationPartOne>,
    /// Largest fitted `C` over the part-one grid, i.e. the smallest constant that works everywhere.
    pub c_fit: Option<f64>,
    pub part_two: Vec<TensorizationPartTwo>,
}

/// `P(Bin(n, q) < x)`.
fn binomial_below(n: usize, q: f64, x: f64) -> Result<f64> {
    let bin = Binomial::new(q, n as u64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((0..=n as u64).take_while(|&k| (k as f64) < x).map(|k| bin.pmf(k)).sum())
}

pub fn tensorization_check(cfg: &TensorizationConfig, exec: Execution) -> Result<TensorizationResult> {
    cfg.validate()?;
    let mut part_one = Vec::new();
    let mut part_two = Vec::new();
    for (li, law) in cfg.laws.iter().enumerate() {
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            let stream = (li as u64 * 64 + ni as u64) << 40;
            let seed = SeedSpec::new(cfg.master_seed, stream);
            let sums: Vec<f64> = exec.map(cfg.trials as usize, |t| {
                let mut rng = seed.trial(t as u64).rng();
                (0..n).map(|_| law.draw(&mut rng).powi(2)).sum()
            });
            let below = |x: f64| sums.iter().filter(|&&s| s < x).count() as u64;
            if let Some(b) = law.small_ball_constant() {
                let chi = ChiSquared::new(n as f64).map_err(|e| Error::Numerical(e.to_string()))?;
                for &eps in cfg.epsilon_grid.iter().filter(|e| **e > 0.0) {
                    let estimate = Proportion::new(below(eps * eps * n as f64), cfg.trials);
                    let fit = |p: f64| p.powf(1.0 / n as f64) / (b * eps);
                    part_one.push(TensorizationPartOne {
                        law: *law,
                        n,
                        epsilon: eps,
                        b,
                        estimate,
                        exact: matches!(law, ZetaLaw::AbsGaussian).then(|| chi.cdf(eps * eps * n as f64)),
                        fitted_c: fit(estimate.estimate),
                        fitted_c_hi: fit(estimate.ci_hi),
                    });
                }
            }
            if let ZetaLaw::Bernoulli { mu } = *law {
                let lambda1 = (1.0 - mu) / 2.0;
                let x = lambda1 * n as f64;
                let exact = binomial_below(n, 1.0 - mu, x)?;
                part_two.push(TensorizationPartTwo {
                    law: *law,
                    n,
                    lambda: 0.5,
                    mu,
                    lambda1,
                    estimate: Proportion::new(below(x), cfg.trials),
                    exact,
                    mu1: exact.powf(1.0 / n as f64),
                });
            }
        }
    }
    let c_fit = part_one.iter().map(|p| p.fitted_c).reduce(f64::max);
    Ok(TensorizationResult { part_one, c_fit, part_two })
}
