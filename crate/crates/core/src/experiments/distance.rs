use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{CurvePoint, ExperimentConfig, Model, ShiftKind};
use crate::arithmetic::{lcd_directions, sample_subspace_direction};
use crate::ensembles::{gaussian_vector, sample_matrix, sample_matrix_in, EntryDistribution, Lane, SeedSpec};
use crate::error::{Error, Result};
use crate::geometry::{classify, dist_to_sparse, random_subset, spread_window_size, Classification};
use crate::linalg::{dist_to_subspace, operator_norm, orthonormal_complement, Subspace};
use crate::parallel::Execution;
use crate::reduction::truncated_moments;
use crate::stats::{ls_slope, mean_estimate, MeanEstimate, Z_95};

const MAX_RESAMPLES: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceTrial {
    pub trial: u64,
    pub dist: f64,
    /// `dist^2 / l`.
    pub dist_sq_over_l: f64,
    /// `|W| / sqrt(d)`, with `W = P_{H^perp} P Y|_J`.
    pub w_norm_over_sqrt_d: f64,
    pub resamples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub m: usize,
    pub d: usize,
    pub l: usize,
    pub shift: ShiftKind,
    /// Trials whose `H` came out rank deficient and were redrawn.
    pub resampled: u64,
    /// `P(dist < epsilon sqrt(l))`.
    pub curve: Vec<CurvePoint>,
    /// `P(chi^2_l < epsilon^2 l)`, exact for Gaussian entries with no
    /// truncation and zero shift.
    pub chi_square_reference: Option<Vec<f64>>,
    /// Least-squares slope of `ln estimate` against `ln epsilon` over points with hits.
    pub log_slope: Option<f64>,
    pub subgaussian_moment: Option<f64>,
    /// Mean of `|W| / sqrt(d)`; divide by `K` for the normalized statistic.
    pub w_norm: MeanEstimate,
    pub w_norm_over_k_sqrt_d_max: Option<f64>,
    pub trials: Vec<DistanceTrial>,
}

struct Geometry {
    m: usize,
    d: usize,
    l: usize,
}

fn geometry(cfg: &ExperimentConfig) -> Result<Geometry> {
    let (big_n, n) = (cfg.dims.big_n, cfg.dims.n);
    let d = big_n - n + 1;
    let m = cfg.m.unwrap_or_else(|| spread_window_size(n, d, &cfg.sparsity));
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "|J| = {m} must lie in 1..={n}; set m explicitly for small n"
        )));
    }
    let l = m + d - 1;
    if l as f64 > cfg.beta * big_n as f64 {
        return Err(Error::InvalidParameter(format!("l = {l} exceeds beta N = {}", cfg.beta * big_n as f64)));
    }
    Ok(Geometry { m, d, l })
}

/// Stream for the `attempt`-th redraw of trial `t`.
fn attempt_seed(base: SeedSpec, t: u64, attempt: u64) -> SeedSpec {
    if attempt == 0 {
        return base.trial(t);
    }
    let salt = attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    SeedSpec::new(base.master_seed ^ salt, base.stream_id.wrapping_add(t))
}

/// Fresh column in the same normalization as the columns of `Y`.
fn fresh_column(cfg: &ExperimentConfig, seed: SeedSpec) -> Result<Vec<f64>> {
    let x = sample_matrix_in(cfg.dims.big_m, 1, std::slice::from_ref(&cfg.dist), seed, Lane::Fresh).column(0);
    match &cfg.truncation {
        None => Ok(x),
        Some(tp) => {
            let level = tp.level(cfg.dims.big_n);
            let mom = truncated_moments(&cfg.dist, level)?;
            let sd = mom.variance.sqrt();
            Ok(x.into_iter().map(|v| (if v.abs() <= level { v } else { 0.0 } - mom.mean) / sd).collect())
        }
    }
}

/// `dist(P x - v, H_{J^c})` for a fresh column `x` and a random `m`-set `J`,
/// plus the operator norm of `W`.
pub fn distance_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<DistanceResult> {
    cfg.validate()?;
    let g = geometry(cfg)?;
    let model = Model::build(&cfg.dims, &cfg.deformation)?;
    let (big_n, big_m, n) = (cfg.dims.big_n, cfg.dims.big_m, cfg.dims.n);
    let base = cfg.seed();

    let trials: Vec<DistanceTrial> = exec
        .map(cfg.trials as usize, |t| {
            let t = t as u64;
            for attempt in 0..MAX_RESAMPLES {
                let seed = attempt_seed(base, t, attempt);
                let x = sample_matrix(big_m, n, &cfg.dist, seed);
                let (y, a, _) = model.reduced(&x, &cfg.dist, cfg.truncation.as_ref())?;
                let z = &(&model.f.v1 * &y) - &a;
                let j_set = random_subset(n, g.m, &mut seed.rng_in(Lane::Subset));
                let j_c: Vec<usize> = (0..n).filter(|k| j_set.binary_search(k).is_err()).collect();
                let h = Subspace::span_of(&z.select_columns(&j_c))?;
                if h.dim() != n - g.m {
                    continue;
                }
                let px = model.f.v1.mul_vec(&fresh_column(cfg, seed)?);
                let target: Vec<f64> = match cfg.shift {
                    ShiftKind::Zero => px,
                    ShiftKind::Random => {
                        let v = gaussian_vector(big_n, seed, Lane::Center);
                        px.iter().zip(&v).map(|(p, c)| p - c).collect()
                    }
                };
                let dist = dist_to_subspace(&target, &h)?;
                let pyj = &model.f.v1 * &y.select_columns(&j_set);
                let q = h.basis();
                let w = &pyj - &(q * &(&q.transpose() * &pyj));
                let w_norm = operator_norm(&w)?;
                return Ok(DistanceTrial {
                    trial: t,
                    dist,
                    dist_sq_over_l: dist * dist / g.l as f64,
                    w_norm_over_sqrt_d: w_norm / (g.d as f64).sqrt(),
                    resamples: attempt,
                });
            }
            Err(Error::Numerical(format!("trial {t}: H_(J^c) rank deficient after {MAX_RESAMPLES} draws")))
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let count = trials.len() as u64;
    let sqrt_l = (g.l as f64).sqrt();
    let curve: Vec<CurvePoint> = cfg
        .epsilon_grid
        .iter()
        .map(|&eps| {
            let threshold = eps * sqrt_l;
            let hits = trials.iter().filter(|tr| tr.dist < threshold).count() as u64;
            CurvePoint::new(eps, threshold, hits, count)
        })
        .collect();

    let exact = cfg.dist == EntryDistribution::Gaussian && cfg.truncation.is_none() && cfg.shift == ShiftKind::Zero;
    let chi_square_reference = if exact {
        let chi = ChiSquared::new(g.l as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        Some(cfg.epsilon_grid.iter().map(|e| chi.cdf(e * e * g.l as f64)).collect())
    } else {
        None
    };

    let (lx, ly): (Vec<f64>, Vec<f64>) = curve
        .iter()
        .filter(|p| p.hits > 0 && p.epsilon > 0.0)
        .map(|p| (p.epsilon.ln(), p.estimate.ln()))
        .unzip();
    let log_slope = (lx.len() >= 2).then(|| ls_slope(&lx, &ly));

    let w: Vec<f64> = trials.iter().map(|tr| tr.w_norm_over_sqrt_d).collect();
    let k = cfg.dist.subgaussian_moment();
    let w_max = w.iter().copied().fold(0.0, f64::max);
    Ok(DistanceResult {
        m: g.m,
        d: g.d,
        l: g.l,
        shift: cfg.shift,
        resampled: trials.iter().filter(|tr| tr.resamples > 0).count() as u64,
        curve,
        chi_square_reference,
        log_slope,
        subgaussian_moment: k,
        w_norm: mean_estimate(&w, Z_95),
        w_norm_over_k_sqrt_d_max: k.map(|k| w_max / k),
        trials,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcdSummary {
    pub ceiling: f64,
    pub directions: usize,
    pub exceeds_ceiling: usize,
    /// Smallest finite LCD among the sampled directions.
    pub min_finite: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceIncompResult {
    pub l: usize,
    /// `dim E`, with `E = P^T H^perp`.
    pub e_dim: usize,
    pub directions: u64,
    pub compressible_hits: u64,
    /// Smallest distance to the sparse vectors over the sampled directions.
    pub min_dist_to_sparse: f64,
    pub lcd: LcdSummary,
}

/// Samples unit directions of `E = P^T H_{J^c}^perp` from one model draw,
/// counts compressible ones and summarizes their LCDs.
pub fn random_subspace_incompressibility(cfg: &ExperimentConfig, exec: Execution) -> Result<SubspaceIncompResult> {
    cfg.validate()?;
    let g = geometry(cfg)?;
    let model = Model::build(&cfg.dims, &cfg.deformation)?;
    let (big_m, n) = (cfg.dims.big_m, cfg.dims.n);
    let seed = cfg.seed();
    let x = sample_matrix(big_m, n, &cfg.dist, seed);
    let (y, a, _) = model.reduced(&x, &cfg.dist, cfg.truncation.as_ref())?;
    let z = &(&model.f.v1 * &y) - &a;
    let j_set = random_subset(n, g.m, &mut seed.rng_in(Lane::Subset));
    let j_c: Vec<usize> = (0..n).filter(|k| j_set.binary_search(k).is_err()).collect();
    let h = Subspace::span_of(&z.select_columns(&j_c))?;
    let perp = orthonormal_complement(&h);
    let e = Subspace::span_of(&(&model.f.v1.transpose() * perp.basis()))?;
    if e.dim() == 0 {
        return Err(Error::InvalidParameter("E = P^T H^perp is {0}".into()));
    }

    let probes: Vec<Result<(bool, f64)>> = exec.map(cfg.trials as usize, |i| {
        let u = sample_subspace_direction(&e, seed.trial(i as u64));
        Ok((classify(&u, &cfg.sparsity)? == Classification::Compressible, dist_to_sparse(&u, &cfg.sparsity)?))
    });
    let probes = probes.into_iter().collect::<Result<Vec<_>>>()?;
    let lcds = lcd_directions(&e, &cfg.lcd, cfg.trials as usize, SeedSpec::new(cfg.master_seed, 1 << 32), exec)?;
    let min_finite = lcds.iter().filter_map(|r| r.value.finite()).fold(None, |acc: Option<f64>, v| {
        Some(acc.map_or(v, |a| a.min(v)))
    });
    Ok(SubspaceIncompResult {
        l: g.l,
        e_dim: e.dim(),
        directions: cfg.trials,
        compressible_hits: probes.iter().filter(|p| p.0).count() as u64,
        min_dist_to_sparse: probes.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        lcd: LcdSummary {
            ceiling: cfg.lcd.ceiling(big_m),
            directions: lcds.len(),
            exceeds_ceiling: lcds.iter().filter(|r| r.value.exceeds_ceiling()).count(),
            min_finite,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformations::DimensionConfig;

    fn gaussian(big_n: usize, n: usize, trials: u64, grid: Vec<f64>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DimensionConfig::new(n, big_n, big_n, 2.0, 2.0).unwrap(), EntryDistribution::Gaussian, grid, trials, 21);
        cfg.m = Some(1);
        cfg
    }

    #[test]
    fn dist_squared_is_chi_square() {
        let cfg = gaussian(12, 10, 3000, vec![0.5, 1.0, 1.5]);
        let r = distance_experiment(&cfg, Execution::default()).unwrap();
        assert_eq!(r.l, 3);
        let reference = r.chi_square_reference.clone().unwrap();
        for (p, q) in r.curve.iter().zip(&reference) {
            assert!((p.estimate - q).abs() < 0.04, "{} vs {q}", p.estimate);
        }
        assert_eq!(r.resampled, 0);
    }

    #[test]
    fn deterministic_across_workers() {
        let mut cfg = gaussian(10, 8, 40, vec![0.5, 1.0]);
        cfg.beta = 0.5;
        let a = distance_experiment(&cfg, Execution::Sequential).unwrap();
        let b = distance_experiment(&cfg, Execution::Workers(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_shift_moves_mass_outward() {
        let mut cfg = gaussian(12, 10, 1000, vec![1.0]);
        let zero = distance_experiment(&cfg, Execution::default()).unwrap();
        cfg.shift = ShiftKind::Random;
        let shifted = distance_experiment(&cfg, Execution::default()).unwrap();
        assert!(shifted.chi_square_reference.is_none());
        assert!(shifted.curve[0].estimate < zero.curve[0].estimate);
    }

    #[test]
    fn w_is_the_orthogonal_part_of_the_held_out_column() {
        // N = n and m = 1: H^perp is a line and W is the held-out column projected onto it.
        let cfg = gaussian(6, 6, 20, vec![1.0]);
        let r = distance_experiment(&cfg, Execution::Sequential).unwrap();
        assert_eq!(r.d, 1);
        assert!(r.trials.iter().all(|t| t.w_norm_over_sqrt_d > 0.0));
    }

    #[test]
    fn geometry_guards() {
        let mut cfg = gaussian(20, 18, 1, vec![1.0]);
        cfg.m = None;
        assert!(distance_experiment(&cfg, Execution::Sequential).is_err());
        cfg.m = Some(10);
        assert!(distance_experiment(&cfg, Execution::Sequential).is_err());
    }

    #[test]
    fn random_subspaces_are_incompressible() {
        let mut cfg = gaussian(30, 28, 200, vec![1.0]);
        cfg.dims = DimensionConfig::new(28, 30, 40, 2.0, 2.0).unwrap();
        cfg.beta = 0.5;
        let r = random_subspace_incompressibility(&cfg, Execution::default()).unwrap();
        assert_eq!(r.l, 3);
        assert_eq!(r.e_dim, 3);
        assert_eq!(r.compressible_hits, 0);
        assert!(r.min_dist_to_sparse > cfg.sparsity.rho);
        assert_eq!(r.lcd.directions, 200);
    }
}
