//! Truncation of `X` at level `N^omega / 2`, centering and variance
//! renormalization, with the exact factorization
//! `T X~ - B = U D (V_1 Y - A) D_1`.

use std::f64::consts::{E, FRAC_1_SQRT_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::deformations::FactorizedT;
use crate::ensembles::EntryDistribution;
use crate::error::{Error, Result};
use crate::linalg::{hs_norm, operator_norm, Matrix};

/// Truncated variances at or below this are treated as degenerate.
const MIN_TRUNCATED_VARIANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub omega: f64,
    /// Target exponent of the `N^{-Gamma}` loss; recorded, not enforced.
    #[serde(default = "default_gamma")]
    pub gamma_target: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for TruncationParams {
    fn default() -> Self {
        TruncationParams { omega: 0.25, gamma_target: 1.0 }
    }
}

impl TruncationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 0.5) {
            return Err(Error::InvalidParameter(format!("omega = {} outside (0, 1/2)", self.omega)));
        }
        Ok(())
    }

    /// Truncation level `N^omega / 2`.
    pub fn level(&self, big_n: usize) -> f64 {
        (big_n as f64).powf(self.omega) / 2.0
    }

    /// Bound `N^omega` on the reduced entries.
    pub fn entry_bound(&self, big_n: usize) -> f64 {
        (big_n as f64).powf(self.omega)
    }
}

/// `E(xi 1{|xi| <= level})` and `Var(xi 1{|xi| <= level})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMoments {
    pub mean: f64,
    pub variance: f64,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `P(a <= G <= b)` for standard normal `G`, accurate in both tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Closed-form truncated first and second moments.
pub fn truncated_moments(dist: &EntryDistribution, level: f64) -> Result<TruncatedMoments> {
    if !(level > 0.0) {
        return Err(Error::InvalidParameter(format!("truncation level {level} must be positive")));
    }
    dist.validate()?;
    let (mean, second) = match *dist {
        EntryDistribution::Rademacher => {
            if level >= 1.0 {
                (0.0, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        EntryDistribution::Gaussian => {
            let phi = (-level * level / 2.0).exp() / (2.0 * PI).sqrt();
            let tail = erfc(level / SQRT_2) + 2.0 * level * phi;
            (0.0, 1.0 - tail)
        }
        EntryDistribution::UniformScaled => {
            let r = 3f64.sqrt();
            if level >= r {
                (0.0, 1.0)
            } else {
                (0.0, level.powi(3) / (3.0 * r))
            }
        }
        EntryDistribution::CenteredExponential => {
            // xi = Y - 1 with Y ~ Exp(1); integrate over Y in [a, b].
            let a = (1.0 - level).max(0.0);
            let b = 1.0 + level;
            let mean = a * (-a).exp() - b * (-b).exp();
            let second = (a * a + 1.0) * (-a).exp() - (b * b + 1.0) * (-b).exp();
            (mean, second)
        }
        EntryDistribution::TwoPointSkewed { p } => {
            EntryDistribution::two_point_atoms(p).iter().filter(|(v, _)| v.abs() <= level).fold(
                (0.0, 0.0),
                |(m, s), (v, w)| (m + v * w, s + v * v * w),
            )
        }
        EntryDistribution::LognormalStandardized => {
            let mu = 0.5f64.exp();
            let s = ((E - 1.0) * E).sqrt();
            let lo = mu - s * level;
            let g_lo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
            let g_hi = (mu + s * level).ln();
            // E[e^{kG} 1{G in [g_lo, g_hi]}] = e^{k^2/2} P(g_lo - k <= G <= g_hi - k).
            let m0 = normal_mass(g_lo, g_hi);
            let m1 = 0.5f64.exp() * normal_mass(g_lo - 1.0, g_hi - 1.0);
            let m2 = 2f64.exp() * normal_mass(g_lo - 2.0, g_hi - 2.0);
            ((m1 - mu * m0) / s, (m2 - 2.0 * mu * m1 + mu * mu * m0) / (s * s))
        }
    };
    let variance = second - mean * mean;
    if variance <= MIN_TRUNCATED_VARIANCE {
        return Err(Error::DegenerateTruncation { level, variance });
    }
    Ok(TruncatedMoments { mean, variance })
}

/// Output of [`reduce`].
#[derive(Clone, Debug)]
pub struct ReducedModel {
    /// `(X~ - E X~) D_1^{-1}`, `M x n`.
    pub y: Matrix,
    /// `(D^{-1} U^T B - V_1 E X~) D_1^{-1}`, `N x n`.
    pub a: Matrix,
    /// Diagonal of `D_1`.
    pub d1: Vec<f64>,
    /// Truncated column means `E X~`.
    pub column_means: Vec<f64>,
    /// Truncated `X`: entries with `|X_ij| > level` set to zero.
    pub x_tilde: Matrix,
    pub level: f64,
    pub truncation_hit_count: usize,
}

impl ReducedModel {
    /// True when no entry was truncated, i.e. the global event held.
    pub fn omega_held(&self) -> bool {
        self.truncation_hit_count == 0
    }

    /// `V_1 Y - A`.
    pub fn reduced_matrix(&self, f: &FactorizedT) -> Matrix {
        &(&f.v1 * &self.y) - &self.a
    }

    /// `U D (V_1 Y - A) D_1`.
    pub fn reconstruct(&self, f: &FactorizedT) -> Matrix {
        (&f.u.scale_cols(&f.d) * &self.reduced_matrix(f)).scale_cols(&self.d1)
    }

    /// `E X~` as an `M x n` matrix.
    pub fn mean_matrix(&self) -> Matrix {
        Matrix::from_fn(self.y.rows(), self.y.cols(), |_, j| self.column_means[j])
    }
}

fn column_laws(dists: &[EntryDistribution], n: usize) -> Result<Vec<EntryDistribution>> {
    match dists.len() {
        1 => Ok(vec![dists[0]; n]),
        k if k == n => Ok(dists.to_vec()),
        k => Err(Error::Dimension(format!("{k} column laws for {n} columns"))),
    }
}

/// Truncate, center and rescale `x` (`M x n`) against `T = U D V_1` and `b`.
/// `dists` holds one law for all columns or one per column.
pub fn reduce(
    x: &Matrix,
    f: &FactorizedT,
    b: &Matrix,
    dists: &[EntryDistribution],
    tp: &TruncationParams,
) -> Result<ReducedModel> {
    tp.validate()?;
    let (m_big, n) = (x.rows(), x.cols());
    let n_big = f.big_n();
    if f.big_m() != m_big || b.rows() != n_big || b.cols() != n {
        return Err(Error::Dimension(format!(
            "X is {m_big}x{n}, T is {n_big}x{}, B is {}x{}",
            f.big_m(),
            b.rows(),
            b.cols()
        )));
    }
    let laws = column_laws(dists, n)?;
    let level = tp.level(n_big);
    let moments = laws.iter().map(|d| truncated_moments(d, level)).collect::<Result<Vec<_>>>()?;
    let column_means: Vec<f64> = moments.iter().map(|m| m.mean).collect();
    let d1: Vec<f64> = moments.iter().map(|m| m.variance.sqrt()).collect();
    let inv_d1: Vec<f64> = d1.iter().map(|v| 1.0 / v).collect();

    let mut hits = 0usize;
    let x_tilde = Matrix::from_fn(m_big, n, |i, j| {
        let v = x.get(i, j);
        if v.abs() <= level {
            v
        } else {
            hits += 1;
            0.0
        }
    });
    let y = Matrix::from_fn(m_big, n, |i, j| (x_tilde.get(i, j) - column_means[j]) * inv_d1[j]);

    let inv_d: Vec<f64> = f.d.iter().map(|v| 1.0 / v).collect();
    let ut_b = (&f.u.transpose() * b).scale_rows(&inv_d);
    let mean_m = Matrix::from_fn(m_big, n, |_, j| column_means[j]);
    let a = (&ut_b - &(&f.v1 * &mean_m)).scale_cols(&inv_d1);

    Ok(ReducedModel { y, a, d1, column_means, x_tilde, level, truncation_hit_count: hits })
}

/// `||(T X~ - B) - U D (V_1 Y - A) D_1||_F / ||T X~ - B||_F`.
pub fn reconstruction_residual(t: &Matrix, b: &Matrix, f: &FactorizedT, rm: &ReducedModel) -> f64 {
    let direct = &(t * &rm.x_tilde) - b;
    let diff = &direct - &rm.reconstruct(f);
    let scale = hs_norm(&direct);
    if scale == 0.0 {
        hs_norm(&diff)
    } else {
        hs_norm(&diff) / scale
    }
}

/// `(||A||, (||B|| / min d + ||E X~||) / min d_1)`; the second value is the
/// triangle-inequality bound on the first.
pub fn shift_norm_certificate(b: &Matrix, f: &FactorizedT, rm: &ReducedModel) -> Result<(f64, f64)> {
    let a_norm = operator_norm(&rm.a)?;
    let d_min = f.d.iter().copied().fold(f64::INFINITY, f64::min);
    let d1_min = rm.d1.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = (operator_norm(b)? / d_min + operator_norm(&rm.mean_matrix())?) / d1_min;
    Ok((a_norm, bound))
}

/// Checks of the reduced entries against `E Y = 0`, `Var Y = 1`, `|Y| <= N^omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub entry_bound: f64,
    pub max_abs_entry: f64,
    pub bound_violations: usize,
    pub truncation_hit_count: usize,
    pub omega_held: bool,
    /// Centered second moments `sum_i Y_ij^2 / M` per column.
    pub column_second_moments: Vec<f64>,
    pub variance_tolerance: f64,
    pub variance_violations: Vec<usize>,
    /// Largest `|E Y_ij|` implied by the truncated moments (zero by construction).
    pub theoretical_mean_error: f64,
}

impl ContractReport {
    pub fn passed(&self) -> bool {
        self.bound_violations == 0 && self.variance_violations.is_empty() && self.theoretical_mean_error == 0.0
    }
}

pub fn verify_reduced_contract(rm: &ReducedModel, tp: &TruncationParams, big_n: usize) -> ContractReport {
    let bound = tp.entry_bound(big_n);
    let entries = rm.y.to_row_major();
    let max_abs_entry = entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound_violations = entries.iter().filter(|v| v.abs() > bound + 1e-12).count();
    let m_big = rm.y.rows();
    let tol = 4.0 / (m_big as f64).sqrt();
    let column_second_moments: Vec<f64> =
        (0..rm.y.cols()).map(|j| rm.y.column(j).iter().map(|v| v * v).sum::<f64>() / m_big as f64).collect();
    let variance_violations =
        column_second_moments.iter().enumerate().filter(|(_, v)| (*v - 1.0).abs() > tol).map(|(j, _)| j).collect();
    ContractReport {
        entry_bound: bound,
        max_abs_entry,
        bound_violations,
        truncation_hit_count: rm.truncation_hit_count,
        omega_held: rm.omega_held(),
        column_second_moments,
        variance_tolerance: tol,
        variance_violations,
        // Y = (X~ - E X~) / d1 is centered exactly.
        theoretical_mean_error: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformations::{build_b, build_t, BKind, DeformationSpec, DimensionConfig, RotationMode, SpectrumSpec};
    use crate::ensembles::{sample_matrix, SeedSpec};
    use crate::linalg::smallest_singular_value;

    /// Adaptive Simpson quadrature, independent of the closed forms.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    fn quadrature_moments(density: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
        let m1 = simpson(&|x| x * density(x), lo, hi, 1e-14);
        let m2 = simpson(&|x| x * x * density(x), lo, hi, 1e-14);
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn rademacher_levels() {
        let m = truncated_moments(&EntryDistribution::Rademacher, 2.0).unwrap();
        assert_eq!((m.mean, m.variance), (0.0, 1.0));
        assert!(matches!(
            truncated_moments(&EntryDistribution::Rademacher, 0.5),
            Err(Error::DegenerateTruncation { .. })
        ));
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let gauss = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        for level in [0.7, 1.5, 3.0, 5.0] {
            let m = truncated_moments(&EntryDistribution::Gaussian, level).unwrap();
            let (qm, qv) = quadrature_moments(&gauss, -level, level);
            assert!((m.mean - qm).abs() < 1e-12 && (m.variance - qv).abs() < 1e-12, "gauss {level}: {m:?} vs {qm} {qv}");

            let exp_c = |x: f64| if x >= -1.0 { (-(x + 1.0)).exp() } else { 0.0 };
            let m = truncated_moments(&EntryDistribution::CenteredExponential, level).unwrap();
            let (qm, qv) = quadrature_moments(&exp_c, (-level).max(-1.0), level);
            assert!((m.mean - qm).abs() < 1e-12 && (m.variance - qv).abs() < 1e-12, "exp {level}");

            let r = 3f64.sqrt();
            let unif = |_x: f64| 1.0 / (2.0 * r);
            let m = truncated_moments(&EntryDistribution::UniformScaled, level).unwrap();
            let (qm, qv) = quadrature_moments(&unif, -level.min(r), level.min(r));
            assert!((m.mean - qm).abs() < 1e-12 && (m.variance - qv).abs() < 1e-12, "unif {level}");

            // Lognormal density of xi = (e^G - mu)/s.
            let mu = 0.5f64.exp();
            let s = ((E - 1.0) * E).sqrt();
            let logn = move |x: f64| {
                let y = mu + s * x;
                if y <= 0.0 {
                    0.0
                } else {
                    s * gauss(y.ln()) / y
                }
            };
            let m = truncated_moments(&EntryDistribution::LognormalStandardized, level).unwrap();
            let lo = (-level).max(-mu / s);
            // Split at the mode to help the integrator.
            let mode = ((-1f64).exp() - mu) / s;
            let parts = [lo, mode.max(lo), level];
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for w in parts.windows(2) {
                if w[1] > w[0] {
                    m1 += simpson(&|x| x * logn(x), w[0], w[1], 1e-15);
                    m2 += simpson(&|x| x * x * logn(x), w[0], w[1], 1e-15);
                }
            }
            assert!((m.mean - m1).abs() < 1e-10, "logn mean {level}: {} vs {m1}", m.mean);
            assert!((m.variance - (m2 - m1 * m1)).abs() < 1e-10, "logn var {level}");
        }
    }

    #[test]
    fn gaussian_level_three_matches_monte_carlo() {
        let m = truncated_moments(&EntryDistribution::Gaussian, 3.0).unwrap();
        let n = 10_000_000u64;
        let mut rng = SeedSpec::new(2024, 0).rng();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = EntryDistribution::Gaussian.draw(&mut rng);
            if v.abs() <= 3.0 {
                s1 += v;
                s2 += v * v;
            }
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = (2.0f64 / n as f64).sqrt();
        assert!((mean - m.mean).abs() <= 4.0 / (n as f64).sqrt());
        assert!((var - m.variance).abs() <= 4.0 * se);
    }

    fn model(
        dims: DimensionConfig,
        dist: EntryDistribution,
        b_kind: BKind,
        rotations: RotationMode,
        seed: u64,
    ) -> (Matrix, Matrix, FactorizedT, Matrix) {
        let spec = DeformationSpec {
            singular_spectrum: if rotations == RotationMode::Identity {
                SpectrumSpec::Constant { value: 1.0 }
            } else {
                SpectrumSpec::Linear { max: dims.k0, min: 1.0 / dims.k0 }
            },
            rotations,
            rotation_seed: SeedSpec::new(seed, 7),
            b_norm_target: if b_kind == BKind::Zero { 0.0 } else { (dims.big_n as f64).sqrt() },
            b_kind,
        };
        let (t, f) = build_t(&dims, &spec).unwrap();
        let b = build_b(&dims, &spec).unwrap();
        let x = sample_matrix(dims.big_m, dims.n, &dist, SeedSpec::new(seed, 1));
        (t, b, f, x)
    }

    #[test]
    fn untruncated_rademacher_is_unchanged() {
        let dims = DimensionConfig::new(5, 8, 10, 2.0, 1.0).unwrap();
        let (_, b, f, x) = model(dims, EntryDistribution::Rademacher, BKind::Zero, RotationMode::Identity, 1);
        let rm = reduce(&x, &f, &b, &[EntryDistribution::Rademacher], &TruncationParams { omega: 0.45, gamma_target: 1.0 }).unwrap();
        assert_eq!(rm.truncation_hit_count, 0);
        assert_eq!(rm.y.max_abs_diff(&x), 0.0);
        assert!(rm.d1.iter().all(|&v| v == 1.0));
        assert_eq!(rm.a.max_abs(), 0.0);
        assert!(verify_reduced_contract(&rm, &TruncationParams { omega: 0.45, gamma_target: 1.0 }, 8).passed());
    }

    #[test]
    fn symmetric_law_with_zero_shift_has_zero_a() {
        let dims = DimensionConfig::new(20, 30, 30, 1.0, 1.0).unwrap();
        let (_, b, f, x) = model(dims, EntryDistribution::Gaussian, BKind::Zero, RotationMode::Identity, 2);
        let rm = reduce(&x, &f, &b, &[EntryDistribution::Gaussian], &TruncationParams::default()).unwrap();
        assert!(rm.truncation_hit_count > 0);
        assert_eq!(rm.a.max_abs(), 0.0);
    }

    #[test]
    fn lognormal_reconstruction_identity() {
        let dims = DimensionConfig::new(150, 200, 240, 1.5, 2.0).unwrap();
        let (t, b, f, x) = model(dims, EntryDistribution::LognormalStandardized, BKind::RankOne, RotationMode::Haar, 4);
        let tp = TruncationParams { omega: 0.25, gamma_target: 1.0 };
        let rm = reduce(&x, &f, &b, &[EntryDistribution::LognormalStandardized], &tp).unwrap();
        assert!(reconstruction_residual(&t, &b, &f, &rm) <= 1e-8);
        let direct = smallest_singular_value(&(&(&t * &rm.x_tilde) - &b)).unwrap();
        let factored = smallest_singular_value(&rm.reconstruct(&f)).unwrap();
        assert!((direct - factored).abs() <= 1e-8 * direct);
        // Heavy right tail: D_1 is far from 1 at this N, so clipped entries
        // can leave the N^omega window and the report must say so.
        let report = verify_reduced_contract(&rm, &tp, 200);
        let over = rm.y.to_row_major().iter().filter(|v| v.abs() > report.entry_bound + 1e-12).count();
        assert_eq!(report.bound_violations, over);
        assert_eq!(report.bound_violations > 0, report.max_abs_entry > report.entry_bound);
        let (a_norm, bound) = shift_norm_certificate(&b, &f, &rm).unwrap();
        assert!(a_norm <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn gaussian_entries_stay_within_bound() {
        let dims = DimensionConfig::new(100, 500, 500, 1.0, 1.0).unwrap();
        let (_, b, f, x) = model(dims, EntryDistribution::Gaussian, BKind::Zero, RotationMode::Identity, 5);
        let tp = TruncationParams { omega: 0.3, gamma_target: 1.0 };
        let rm = reduce(&x, &f, &b, &[EntryDistribution::Gaussian], &tp).unwrap();
        let report = verify_reduced_contract(&rm, &tp, 500);
        assert!((report.entry_bound - 500f64.powf(0.3)).abs() < 1e-12);
        assert!((report.entry_bound - 6.45).abs() < 0.01);
        assert_eq!(report.bound_violations, 0);
        // CLT check on the mean of the column second moments.
        let avg = report.column_second_moments.iter().sum::<f64>() / 100.0;
        assert!((avg - 1.0).abs() <= 4.0 / (500.0f64 * 100.0).sqrt() * 2f64.sqrt());
    }

    #[test]
    fn per_column_laws() {
        let dims = DimensionConfig::new(3, 20, 20, 1.0, 1.0).unwrap();
        let (_, b, f, _) = model(dims, EntryDistribution::Gaussian, BKind::Zero, RotationMode::Identity, 6);
        let laws = [EntryDistribution::Gaussian, EntryDistribution::CenteredExponential, EntryDistribution::Rademacher];
        let x = crate::ensembles::sample_matrix_columns(20, 3, &laws, SeedSpec::new(6, 0));
        let rm = reduce(&x, &f, &b, &laws, &TruncationParams::default()).unwrap();
        assert!(rm.column_means[1] != 0.0 && rm.column_means[0] == 0.0);
        assert!(reduce(&x, &f, &b, &laws[..2], &TruncationParams::default()).is_err());
    }

    #[test]
    fn hit_count_is_monotone_in_omega() {
        let dims = DimensionConfig::new(50, 100, 100, 1.0, 1.0).unwrap();
        let (_, b, f, x) = model(dims, EntryDistribution::CenteredExponential, BKind::Zero, RotationMode::Identity, 8);
        let mut last = usize::MAX;
        for omega in [0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.49] {
            let rm = reduce(&x, &f, &b, &[EntryDistribution::CenteredExponential], &TruncationParams { omega, gamma_target: 1.0 }).unwrap();
            assert!(rm.truncation_hit_count <= last);
            last = rm.truncation_hit_count;
        }
    }

    #[test]
    fn invalid_omega() {
        assert!(TruncationParams { omega: 0.0, gamma_target: 1.0 }.validate().is_err());
        assert!(TruncationParams { omega: 0.5, gamma_target: 1.0 }.validate().is_err());
    }
}
