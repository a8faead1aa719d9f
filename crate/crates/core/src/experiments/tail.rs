use serde::{Deserialize, Serialize};

use super::{CurvePoint, ExperimentConfig, Model, ModelForm};
use crate::ensembles::{sample_matrix, EntryDistribution, SeedSpec};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, smallest_singular_value, Matrix};
use crate::parallel::Execution;
use crate::reduction::{reconstruction_residual, reduce, shift_norm_certificate, verify_reduced_contract, TruncationParams};
use crate::stats::{mean_estimate, MeanEstimate, Z_95};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStat {
    pub trial: u64,
    pub s_min: f64,
    pub s_max: f64,
    pub truncation_hits: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    pub form: ModelForm,
    /// `N^{-tau} (sqrt(N) - sqrt(n - 1))`; thresholds are `epsilon` times this.
    pub threshold_unit: f64,
    pub curve: Vec<CurvePoint>,
    pub mean_s_min: f64,
    pub mean_s_max: f64,
    pub trials: Vec<TrialStat>,
}

fn extreme_singular_values(z: &Matrix) -> Result<(f64, f64)> {
    let s = singular_values(z)?;
    if z.rows() < z.cols() {
        return Err(Error::WideMatrix { rows: z.rows(), cols: z.cols() });
    }
    Ok((*s.last().unwrap_or(&0.0), s.first().copied().unwrap_or(0.0)))
}

/// Tail of `s_n(T X - B)` (or of `s_n(P Y - A)` in reduced form) at
/// `epsilon N^{-tau} (sqrt(N) - sqrt(n - 1))`, one curve point per epsilon.
pub fn tail_probability(cfg: &ExperimentConfig, exec: Execution) -> Result<TailResult> {
    cfg.validate()?;
    let model = Model::build(&cfg.dims, &cfg.deformation)?;
    let seed = cfg.seed();
    let (m_big, n) = (cfg.dims.big_m, cfg.dims.n);
    let stats: Vec<TrialStat> = exec
        .map(cfg.trials as usize, |t| {
            let x = sample_matrix(m_big, n, &cfg.dist, seed.trial(t as u64));
            let (z, hits) = match cfg.form {
                ModelForm::Direct => {
                    let (xt, hits) = match &cfg.truncation {
                        Some(tp) => {
                            let rm = reduce(&x, &model.f, &model.b, std::slice::from_ref(&cfg.dist), tp)?;
                            (rm.x_tilde, Some(rm.truncation_hit_count))
                        }
                        None => (x, None),
                    };
                    (&(&model.t * &xt) - &model.b, hits)
                }
                ModelForm::Reduced => {
                    let (y, a, hits) = model.reduced(&x, &cfg.dist, cfg.truncation.as_ref())?;
                    (&(&model.f.v1 * &y) - &a, hits)
                }
            };
            let (s_min, s_max) = extreme_singular_values(&z)?;
            Ok(TrialStat { trial: t as u64, s_min, s_max, truncation_hits: hits })
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let unit = cfg.threshold_unit();
    let trials = stats.len() as u64;
    let curve = cfg
        .epsilon_grid
        .iter()
        .map(|&eps| {
            let threshold = eps * unit;
            let hits = stats.iter().filter(|s| s.s_min <= threshold).count() as u64;
            CurvePoint::new(eps, threshold, hits, trials)
        })
        .collect();
    let mean = |f: fn(&TrialStat) -> f64| stats.iter().map(f).sum::<f64>() / stats.len() as f64;
    Ok(TailResult {
        form: cfg.form,
        threshold_unit: unit,
        curve,
        mean_s_min: mean(|s| s.s_min),
        mean_s_max: mean(|s| s.s_max),
        trials: stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub big_n: usize,
    pub n: usize,
    pub lambda: f64,
    pub trials: u64,
    pub s_min_scaled: MeanEstimate,
    pub s_max_scaled: MeanEstimate,
    /// `1 - sqrt(lambda)` and `1 + sqrt(lambda)`.
    pub predicted_min: f64,
    pub predicted_max: f64,
    pub rel_err_min: f64,
    pub rel_err_max: f64,
    /// The comparison is meaningful for `lambda <= 1/2`.
    pub lambda_in_range: bool,
}

/// Means of `s_n(X) / sqrt(N)` and `s_1(X) / sqrt(N)` for `N x n` matrices `X`.
pub fn edge_convergence(
    big_n: usize,
    n: usize,
    dist: &EntryDistribution,
    trials: u64,
    seed: SeedSpec,
    exec: Execution,
) -> Result<EdgeReport> {
    if n == 0 || n > big_n || trials == 0 {
        return Err(Error::InvalidParameter(format!("edge experiment needs 1 <= n <= N and trials >= 1, got n = {n}, N = {big_n}")));
    }
    dist.validate()?;
    let scale = (big_n as f64).sqrt();
    let pairs: Vec<(f64, f64)> = exec
        .map(trials as usize, |t| {
            let x = sample_matrix(big_n, n, dist, seed.trial(t as u64));
            extreme_singular_values(&x).map(|(lo, hi)| (lo / scale, hi / scale))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let lo: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let hi: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let lambda = n as f64 / big_n as f64;
    let (s_min_scaled, s_max_scaled) = (mean_estimate(&lo, Z_95), mean_estimate(&hi, Z_95));
    let (predicted_min, predicted_max) = (1.0 - lambda.sqrt(), 1.0 + lambda.sqrt());
    Ok(EdgeReport {
        big_n,
        n,
        lambda,
        trials,
        rel_err_min: if predicted_min > 0.0 { (s_min_scaled.mean - predicted_min).abs() / predicted_min } else { f64::INFINITY },
        rel_err_max: (s_max_scaled.mean - predicted_max).abs() / predicted_max,
        s_min_scaled,
        s_max_scaled,
        predicted_min,
        predicted_max,
        lambda_in_range: lambda <= 0.5,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReduceTrial {
    pub trial: u64,
    /// `|(T X~ - B) - U D (V_1 Y - A) D_1|_F / |T X~ - B|_F`.
    pub residual: f64,
    pub s_direct: f64,
    pub s_factored: f64,
    pub rel_diff: f64,
    pub truncation_hits: usize,
    pub omega_held: bool,
    pub bound_violations: usize,
    pub variance_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReduceVerifyResult {
    pub truncation: TruncationParams,
    pub trials: Vec<ReduceTrial>,
    pub max_residual: f64,
    pub max_rel_diff: f64,
    pub a_norm: f64,
    /// `(|B| / min d + |E X~|) / min d_1`.
    pub a_norm_bound: f64,
    /// Identity residual and singular value agreement within `1e-8`.
    pub identity_holds: bool,
}

/// End-to-end check of `T X~ - B = U D (V_1 Y - A) D_1` per trial.
pub fn reduce_verify(cfg: &ExperimentConfig, exec: Execution) -> Result<ReduceVerifyResult> {
    cfg.validate()?;
    let tp = cfg.truncation.unwrap_or_default();
    let model = Model::build(&cfg.dims, &cfg.deformation)?;
    let seed = cfg.seed();
    let laws = std::slice::from_ref(&cfg.dist);
    let rows: Vec<(ReduceTrial, f64, f64)> = exec
        .map(cfg.trials as usize, |t| {
            let x = sample_matrix(cfg.dims.big_m, cfg.dims.n, &cfg.dist, seed.trial(t as u64));
            let rm = reduce(&x, &model.f, &model.b, laws, &tp)?;
            let residual = reconstruction_residual(&model.t, &model.b, &model.f, &rm);
            let direct = &(&model.t * &rm.x_tilde) - &model.b;
            let s_direct = smallest_singular_value(&direct)?;
            let s_factored = smallest_singular_value(&rm.reconstruct(&model.f))?;
            let scale = s_direct.max(f64::MIN_POSITIVE);
            let report = verify_reduced_contract(&rm, &tp, cfg.dims.big_n);
            let (a_norm, a_bound) = shift_norm_certificate(&model.b, &model.f, &rm)?;
            Ok((
                ReduceTrial {
                    trial: t as u64,
                    residual,
                    s_direct,
                    s_factored,
                    rel_diff: (s_direct - s_factored).abs() / scale,
                    truncation_hits: rm.truncation_hit_count,
                    omega_held: rm.omega_held(),
                    bound_violations: report.bound_violations,
                    variance_violations: report.variance_violations.len(),
                },
                a_norm,
                a_bound,
            ))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let max_residual = rows.iter().map(|r| r.0.residual).fold(0.0, f64::max);
    let max_rel_diff = rows.iter().map(|r| r.0.rel_diff).fold(0.0, f64::max);
    let a_norm = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let a_norm_bound = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(ReduceVerifyResult {
        truncation: tp,
        trials: rows.into_iter().map(|r| r.0).collect(),
        max_residual,
        max_rel_diff,
        a_norm,
        a_norm_bound,
        identity_holds: max_residual <= 1e-8 && max_rel_diff <= 1e-8,
    })
}
