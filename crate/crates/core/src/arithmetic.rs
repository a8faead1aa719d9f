//! Least common denominators of vectors and low-dimensional subspaces,
//! Lévy concentration estimates and small-ball checks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensembles::{gaussian_vector, EntryDistribution, Lane, SeedSpec};
use crate::error::{Error, Result};
use crate::linalg::{hs_norm, norm2, operator_norm, Matrix, Subspace};
use crate::parallel::Execution;
use crate::stats::{Proportion, Z_95};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcdParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Search ceiling; `None` means `10 sqrt(M)`.
    #[serde(default)]
    pub theta_max: Option<f64>,
    pub grid_tolerance: f64,
}

impl Default for LcdParams {
    fn default() -> Self {
        LcdParams { alpha: 1.0, gamma: 0.1, theta_max: None, grid_tolerance: 1e-6 }
    }
}

impl LcdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.grid_tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "LCD parameters alpha = {}, gamma = {}, tolerance = {} out of range",
                self.alpha, self.gamma, self.grid_tolerance
            )));
        }
        if let Some(t) = self.theta_max {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("theta_max = {t} must be positive")));
            }
        }
        Ok(())
    }

    pub fn ceiling(&self, ambient_dim: usize) -> f64 {
        self.theta_max.unwrap_or(10.0 * (ambient_dim as f64).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ceiling {
    ExceedsCeiling,
}

/// A finite LCD or the marker `"exceeds_ceiling"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LcdValue {
    Finite(f64),
    Exceeds(Ceiling),
}

impl LcdValue {
    pub const EXCEEDS: LcdValue = LcdValue::Exceeds(Ceiling::ExceedsCeiling);

    pub fn finite(&self) -> Option<f64> {
        match self {
            LcdValue::Finite(v) => Some(*v),
            LcdValue::Exceeds(_) => None,
        }
    }

    pub fn exceeds_ceiling(&self) -> bool {
        matches!(self, LcdValue::Exceeds(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcdResult {
    pub value: LcdValue,
    /// Scalar dilation for vectors; the point of `E` for subspaces.
    pub witness_theta: Vec<f64>,
    pub witness_lattice_point: Vec<i64>,
    pub certified: bool,
}

fn lattice_dist(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - v.round()).powi(2)).sum::<f64>().sqrt()
}

fn round_point(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| v.round() as i64).collect()
}

/// Margin of the defining condition at `theta a`; admissible iff negative.
fn margin(a: &[f64], a_norm: f64, theta: f64, p: &LcdParams, buf: &mut [f64]) -> f64 {
    for (b, v) in buf.iter_mut().zip(a) {
        *b = theta * v;
    }
    lattice_dist(buf) - (p.gamma * theta * a_norm).min(p.alpha)
}

/// Smallest `theta > 0` with `dist(theta a, Z^M) < min(gamma |theta a|, alpha)`.
///
/// The margin is Lipschitz in `theta` with constant `(1 + gamma)|a|`, so each
/// evaluation clears an interval of length `margin / L`; where that falls
/// below the grid cell, cells are cleared by the two-endpoint bound.
pub fn lcd_vector(a: &[f64], p: &LcdParams) -> Result<LcdResult> {
    p.validate()?;
    let a_norm = norm2(a);
    if a.is_empty() || !a_norm.is_finite() || a_norm == 0.0 {
        return Err(Error::InvalidParameter("LCD of a zero or non-finite vector".into()));
    }
    let ceiling = p.ceiling(a.len());
    let lip = (1.0 + p.gamma) * a_norm;
    let cell = p.grid_tolerance / 4.0;
    let mut buf = vec![0.0; a.len()];
    let mut g = |t: f64| margin(a, a_norm, t, p, &mut buf);

    // Below 1/(2|a|_inf) every coordinate rounds to zero, so dist = theta |a| > gamma theta |a|.
    let a_inf = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut theta = 0.5 / a_inf;
    let mut g_theta = g(theta);
    let mut ambiguous: Option<f64> = None;
    let bracket = loop {
        if theta > ceiling {
            break None;
        }
        if g_theta < 0.0 {
            break Some((theta - cell, theta));
        }
        let step = g_theta / lip;
        if step >= cell {
            theta += step;
            g_theta = g(theta);
            continue;
        }
        let next = theta + cell;
        let g_next = g(next);
        if g_next < 0.0 {
            break Some((theta, next));
        }
        if g_theta + g_next - lip * cell < 0.0 && ambiguous.is_none() {
            ambiguous = Some(theta);
        }
        theta = next;
        g_theta = g_next;
    };

    let Some((mut lo, mut hi)) = bracket else {
        return Ok(LcdResult {
            value: LcdValue::EXCEEDS,
            witness_theta: vec![],
            witness_lattice_point: vec![],
            certified: ambiguous.is_none(),
        });
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let point: Vec<f64> = a.iter().map(|v| hi * v).collect();
    Ok(LcdResult {
        value: LcdValue::Finite(hi),
        witness_theta: vec![hi],
        witness_lattice_point: round_point(&point),
        certified: ambiguous.is_none_or(|t| t >= hi - p.grid_tolerance),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SubspaceLcdMode {
    Certified,
    MonteCarlo { directions: usize, seed: SeedSpec },
}

pub const MAX_CERTIFIED_LCD_DIM: usize = 2;

/// Uniform unit directions of `e`.
pub fn sample_subspace_direction(e: &Subspace, seed: SeedSpec) -> Vec<f64> {
    let c = gaussian_vector(e.dim(), seed, Lane::Direction);
    let v = e.embed(&c);
    let nrm = norm2(&v);
    v.iter().map(|x| x / nrm).collect()
}

/// `lcd_vector` along sampled unit directions of `e`, one result per direction.
pub fn lcd_directions(
    e: &Subspace,
    p: &LcdParams,
    directions: usize,
    seed: SeedSpec,
    exec: Execution,
) -> Result<Vec<LcdResult>> {
    if e.dim() == 0 {
        return Err(Error::InvalidParameter("LCD of the zero subspace".into()));
    }
    exec.map(directions, |i| {
        let u = sample_subspace_direction(e, seed.trial(i as u64));
        let mut r = lcd_vector(&u, p)?;
        if let Some(t) = r.value.finite() {
            r.witness_theta = u.iter().map(|v| t * v).collect();
        }
        Ok(r)
    })
    .into_iter()
    .collect()
}

/// `inf{|theta| : theta in E, dist(theta, Z^M) < min(gamma |theta|, alpha)}`.
pub fn lcd_subspace(e: &Subspace, p: &LcdParams, mode: &SubspaceLcdMode) -> Result<LcdResult> {
    p.validate()?;
    match (mode, e.dim()) {
        (_, 0) => Err(Error::InvalidParameter("LCD of the zero subspace".into())),
        (SubspaceLcdMode::Certified, 1) => {
            let u = e.basis().column(0);
            let mut r = lcd_vector(&u, p)?;
            if let Some(t) = r.value.finite() {
                r.witness_theta = u.iter().map(|v| t * v).collect();
            }
            Ok(r)
        }
        (SubspaceLcdMode::Certified, 2) => Ok(lcd_plane(e, p)),
        (SubspaceLcdMode::Certified, k) => Err(Error::CertifiedDimension(k)),
        (SubspaceLcdMode::MonteCarlo { directions, seed }, _) => {
            let results = lcd_directions(e, p, (*directions).max(1), *seed, Execution::default())?;
            let best = results
                .into_iter()
                .filter(|r| r.value.finite().is_some())
                .min_by(|a, b| a.value.finite().unwrap().total_cmp(&b.value.finite().unwrap()));
            Ok(match best {
                Some(mut r) => {
                    r.certified = false;
                    r
                }
                None => LcdResult {
                    value: LcdValue::EXCEEDS,
                    witness_theta: vec![],
                    witness_lattice_point: vec![],
                    certified: false,
                },
            })
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct PolarCell {
    r1: f64,
    r2: f64,
    p1: f64,
    p2: f64,
}

impl PartialEq for PolarCell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PolarCell {}

impl PartialOrd for PolarCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PolarCell {
    // Max-heap order: smallest inner radius first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.r1.total_cmp(&self.r1).then(other.p1.total_cmp(&self.p1))
    }
}

/// Branch and bound over polar cells `[r1, r2] x [phi1, phi2]` of a plane,
/// processed by increasing inner radius.
fn lcd_plane(e: &Subspace, p: &LcdParams) -> LcdResult {
    let b1 = e.basis().column(0);
    let b2 = e.basis().column(1);
    let m = b1.len();
    let ceiling = p.ceiling(m);
    let cell = p.grid_tolerance / 4.0;
    let mut buf = vec![0.0; m];
    let point = |r: f64, phi: f64, buf: &mut Vec<f64>| {
        let (s, c) = phi.sin_cos();
        for k in 0..m {
            buf[k] = r * (c * b1[k] + s * b2[k]);
        }
    };

    let mut heap = BinaryHeap::new();
    // Inside the ball of radius 1/2 every point rounds to the origin.
    heap.push(PolarCell { r1: 0.5, r2: ceiling.max(0.5), p1: 0.0, p2: PI });
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut ambiguous = f64::INFINITY;
    while let Some(c) = heap.pop() {
        let best_r = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if c.r1 >= best_r - p.grid_tolerance || c.r1 > ceiling {
            break;
        }
        let (rc, pc) = (0.5 * (c.r1 + c.r2), 0.5 * (c.p1 + c.p2));
        let (dr, dp) = (c.r2 - c.r1, c.p2 - c.p1);
        point(rc, pc, &mut buf);
        let g = lattice_dist(&buf) - (p.gamma * rc).min(p.alpha);
        if g < 0.0 && rc <= ceiling && rc < best_r {
            best = Some((rc, buf.clone()));
        }
        let lower = g - (1.0 + p.gamma) * dr / 2.0 - c.r2 * dp / 2.0;
        if lower >= 0.0 {
            continue;
        }
        if dr <= cell && c.r2 * dp <= cell {
            if g >= 0.0 {
                ambiguous = ambiguous.min(c.r1);
            }
            continue;
        }
        if (1.0 + p.gamma) * dr >= c.r2 * dp {
            let mid = 0.5 * (c.r1 + c.r2);
            heap.push(PolarCell { r2: mid, ..c });
            heap.push(PolarCell { r1: mid, ..c });
        } else {
            let mid = 0.5 * (c.p1 + c.p2);
            heap.push(PolarCell { p2: mid, ..c });
            heap.push(PolarCell { p1: mid, ..c });
        }
    }
    match best {
        Some((r, theta)) => LcdResult {
            value: LcdValue::Finite(r),
            witness_lattice_point: round_point(&theta),
            witness_theta: theta,
            certified: ambiguous >= r - p.grid_tolerance,
        },
        None => LcdResult {
            value: LcdValue::EXCEEDS,
            witness_theta: vec![],
            witness_lattice_point: vec![],
            certified: ambiguous.is_infinite(),
        },
    }
}

/// Dyadic level `k` and `D = c2 sqrt(M) 2^k` with `D <= value < 2D`.
pub fn level_set(value: f64, c2: f64, ambient_dim: usize) -> (i32, f64) {
    let base = c2 * (ambient_dim as f64).sqrt();
    let mut k = (value / base).log2().floor() as i32;
    // Guard the floor against rounding at exact powers of two.
    while base * 2f64.powi(k) > value {
        k -= 1;
    }
    while base * 2f64.powi(k + 1) <= value {
        k += 1;
    }
    (k, base * 2f64.powi(k))
}

/// Random vectors indexed by trial, so any worker can produce any sample.
pub trait VectorSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, trial: u64) -> Vec<f64>;
}

/// `sum_k a_k xi_k`.
#[derive(Clone, Debug)]
pub struct WeightedSum {
    pub a: Vec<f64>,
    pub dist: EntryDistribution,
    pub seed: SeedSpec,
}

impl VectorSampler for WeightedSum {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, trial: u64) -> Vec<f64> {
        let mut rng = self.seed.trial(trial).rng_in(Lane::Fresh);
        vec![self.a.iter().map(|a| a * self.dist.draw(&mut rng)).sum()]
    }
}

/// `A xi` for a fixed matrix `A` and i.i.d. `xi`.
#[derive(Clone, Debug)]
pub struct LinearImage {
    pub a: Matrix,
    pub dist: EntryDistribution,
    pub seed: SeedSpec,
}

impl VectorSampler for LinearImage {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn sample(&self, trial: u64) -> Vec<f64> {
        let mut rng = self.seed.trial(trial).rng_in(Lane::Fresh);
        let xi: Vec<f64> = (0..self.a.cols()).map(|_| self.dist.draw(&mut rng)).collect();
        self.a.mul_vec(&xi)
    }
}

/// A point mass.
#[derive(Clone, Debug)]
pub struct Constant(pub Vec<f64>);

impl VectorSampler for Constant {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _trial: u64) -> Vec<f64> {
        self.0.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSearch {
    /// Sampled points (and the sample mean) as candidate centers.
    SampleModes,
    /// Exact supremum of the empirical measure over intervals; one-dimensional only.
    Interval1d,
}

#[derive(Clone, Copy, Debug)]
pub struct ConcentrationOptions {
    pub center_search: CenterSearch,
    pub max_centers: usize,
    pub exec: Execution,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        ConcentrationOptions { center_search: CenterSearch::Interval1d, max_centers: 1000, exec: Execution::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub epsilon: f64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ci_halfwidth: f64,
    pub hits: u64,
    pub trials: u64,
    pub center: Vec<f64>,
    pub center_search: CenterSearch,
}

pub const MIN_CONCENTRATION_TRIALS: u64 = 1000;

/// Closed balls are widened by this relative amount so that points exactly
/// on the boundary survive rounding.
const BALL_SLACK: f64 = 1e-12;

fn within(dist: f64, eps: f64) -> bool {
    dist <= eps * (1.0 + BALL_SLACK) + BALL_SLACK
}

/// Estimates of `sup_v P(|S - v| <= eps)` for each `eps` from one sample set.
/// Both center searches return lower bounds of the supremum over all centers
/// of the true law, up to sampling error.
pub fn levy_profile(
    sampler: &dyn VectorSampler,
    epsilons: &[f64],
    trials: u64,
    opts: &ConcentrationOptions,
) -> Result<Vec<ConcentrationEstimate>> {
    if trials < MIN_CONCENTRATION_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "concentration needs at least {MIN_CONCENTRATION_TRIALS} trials, got {trials}"
        )));
    }
    if epsilons.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidParameter("negative concentration radius".into()));
    }
    let samples: Vec<Vec<f64>> = opts.exec.map(trials as usize, |t| sampler.sample(t as u64));
    let dim = sampler.dim();
    let search = if dim == 1 { opts.center_search } else { CenterSearch::SampleModes };
    let best: Vec<(u64, Vec<f64>)> = match search {
        CenterSearch::Interval1d => {
            let mut s: Vec<f64> = samples.iter().map(|v| v[0]).collect();
            s.sort_by(f64::total_cmp);
            epsilons
                .iter()
                .map(|&eps| {
                    let (mut j, mut best, mut center) = (0usize, 0usize, s[0]);
                    for i in 0..s.len() {
                        j = j.max(i);
                        while j + 1 < s.len() && within(s[j + 1] - s[i], 2.0 * eps) {
                            j += 1;
                        }
                        if j + 1 - i > best {
                            best = j + 1 - i;
                            center = 0.5 * (s[i] + s[j]);
                        }
                    }
                    (best as u64, vec![center])
                })
                .collect()
        }
        CenterSearch::SampleModes => {
            let k = opts.max_centers.max(1).min(samples.len());
            let mut mean = vec![0.0; dim];
            for v in &samples {
                mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
            let mut centers: Vec<&[f64]> = samples[..k].iter().map(|v| v.as_slice()).collect();
            centers.push(&mean);
            let counts: Vec<Vec<u64>> = opts.exec.map(centers.len(), |c| {
                let center = centers[c];
                let mut counts = vec![0u64; epsilons.len()];
                for v in &samples {
                    let d = v.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    for (cnt, &eps) in counts.iter_mut().zip(epsilons) {
                        if within(d, eps) {
                            *cnt += 1;
                        }
                    }
                }
                counts
            });
            (0..epsilons.len())
                .map(|e| {
                    let (c, n) = counts.iter().enumerate().fold((0, 0), |acc, (c, v)| if v[e] > acc.1 { (c, v[e]) } else { acc });
                    (n, centers[c].to_vec())
                })
                .collect()
        }
    };
    Ok(epsilons
        .iter()
        .zip(best)
        .map(|(&epsilon, (hits, center))| {
            let pr = Proportion::with_z(hits, trials, Z_95);
            ConcentrationEstimate {
                epsilon,
                estimate: pr.estimate,
                ci_lo: pr.ci_lo,
                ci_hi: pr.ci_hi,
                ci_halfwidth: pr.interval().half_width(),
                hits,
                trials,
                center,
                center_search: search,
            }
        })
        .collect())
}

pub fn levy_concentration(
    sampler: &dyn VectorSampler,
    epsilon: f64,
    trials: u64,
    opts: &ConcentrationOptions,
) -> Result<ConcentrationEstimate> {
    Ok(levy_profile(sampler, &[epsilon], trials, opts)?.remove(0))
}

/// `sup_v P(|sum_k xi_k / sqrt(n) - v| <= eps)` for Rademacher `xi`, by
/// exhaustive summation over the binomial atoms.
pub fn rademacher_uniform_concentration(n: usize, epsilon: f64) -> f64 {
    let scale = (n as f64).sqrt();
    let mut mass = vec![0.0f64; n + 1];
    let mut c = 1.0f64;
    for (k, m) in mass.iter_mut().enumerate() {
        *m = c / 2f64.powi(n as i32);
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    let atom = |k: usize| (2.0 * k as f64 - n as f64) / scale;
    (0..=n)
        .map(|i| (i..=n).take_while(|&j| within(atom(j) - atom(i), 2.0 * epsilon)).map(|j| mass[j]).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallCltReport {
    pub epsilon: f64,
    pub a_l2: f64,
    pub a_l3: f64,
    pub third_moment_bound: f64,
    /// `sqrt(2/pi) eps / |a|_2`.
    pub gaussian_term: f64,
    /// `B (|a|_3 / |a|_2)^3`, the coefficient of the unknown constant.
    pub clt_term: f64,
    pub concentration: ConcentrationEstimate,
    /// Smallest constant making the bound hold for the estimate.
    pub fitted_constant: f64,
    pub holds_with_unit_constant: bool,
}

pub fn check_small_ball_clt(
    a: &[f64],
    dist: &EntryDistribution,
    epsilon: f64,
    trials: u64,
    seed: SeedSpec,
) -> Result<SmallBallCltReport> {
    let a_l2 = norm2(a);
    if a_l2 == 0.0 {
        return Err(Error::InvalidParameter("zero coefficient vector".into()));
    }
    let a_l3 = a.iter().map(|v| v.abs().powi(3)).sum::<f64>().cbrt();
    let b = dist.third_moment_bound();
    let gaussian_term = (2.0 / PI).sqrt() * epsilon / a_l2;
    let clt_term = b * (a_l3 / a_l2).powi(3);
    let sampler = WeightedSum { a: a.to_vec(), dist: *dist, seed };
    let concentration = levy_concentration(&sampler, epsilon, trials, &ConcentrationOptions::default())?;
    let fitted_constant = ((concentration.estimate - gaussian_term) / clt_term).max(0.0);
    Ok(SmallBallCltReport {
        epsilon,
        a_l2,
        a_l3,
        third_moment_bound: b,
        gaussian_term,
        clt_term,
        holds_with_unit_constant: concentration.estimate <= gaussian_term + clt_term,
        concentration,
        fitted_constant,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBallPoint {
    pub t: f64,
    pub radius: f64,
    pub concentration: ConcentrationEstimate,
    /// Chi-square ball mass when the entries are Gaussian.
    pub gaussian_reference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBallReport {
    pub points: Vec<ProjectionBallPoint>,
    pub monotone_in_t: bool,
}

/// `L(P X, t sqrt(N))` for `P` with orthonormal rows and i.i.d. `X`.
pub fn check_projection_small_ball(
    dist: &EntryDistribution,
    pmat: &Matrix,
    t_grid: &[f64],
    trials: u64,
    seed: SeedSpec,
    opts: &ConcentrationOptions,
) -> Result<ProjectionBallReport> {
    let n = pmat.rows();
    let gram = pmat * &pmat.transpose();
    let resid = gram.max_abs_diff(&Matrix::identity(n));
    if resid > crate::linalg::ORTHO_TOL {
        return Err(Error::NotOrthonormal { residual: resid });
    }
    let radii: Vec<f64> = t_grid.iter().map(|t| t * (n as f64).sqrt()).collect();
    let sampler = LinearImage { a: pmat.clone(), dist: *dist, seed };
    let estimates = levy_profile(&sampler, &radii, trials, opts)?;
    let chi = ChiSquared::new(n as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let points: Vec<ProjectionBallPoint> = t_grid
        .iter()
        .zip(radii)
        .zip(estimates)
        .map(|((&t, radius), concentration)| ProjectionBallPoint {
            t,
            radius,
            gaussian_reference: (*dist == EntryDistribution::Gaussian).then(|| chi.cdf(radius * radius)),
            concentration,
        })
        .collect();
    let monotone_in_t = points.windows(2).all(|w| w[0].t > w[1].t || w[0].concentration.hits <= w[1].concentration.hits);
    Ok(ProjectionBallReport { points, monotone_in_t })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HansonWrightReport {
    pub hs_norm: f64,
    pub op_norm: f64,
    pub radius: f64,
    pub subgaussian_moment: f64,
    pub concentration: ConcentrationEstimate,
    /// `-ln(estimate) K^4 |A|^2 / |A|_HS^2`; infinite when no hit was observed.
    pub exponent: f64,
    pub gaussian_identity_reference: Option<f64>,
}

/// `sup_y P(|A xi - y| <= |A|_HS / 2)` by mode seeking.
pub fn check_hanson_wright_ball(
    a: &Matrix,
    dist: &EntryDistribution,
    trials: u64,
    seed: SeedSpec,
    opts: &ConcentrationOptions,
) -> Result<HansonWrightReport> {
    let k = dist
        .subgaussian_moment()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no subgaussian moment", dist.name())))?;
    let hs = hs_norm(a);
    let op = operator_norm(a)?;
    let radius = hs / 2.0;
    let sampler = LinearImage { a: a.clone(), dist: *dist, seed };
    let concentration = levy_concentration(&sampler, radius, trials, opts)?;
    let exponent = -concentration.estimate.ln() * k.powi(4) * op * op / (hs * hs);
    let is_identity = a.rows() == a.cols() && a.max_abs_diff(&Matrix::identity(a.rows())) == 0.0;
    let gaussian_identity_reference = if *dist == EntryDistribution::Gaussian && is_identity {
        let chi = ChiSquared::new(a.rows() as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        Some(chi.cdf(radius * radius))
    } else {
        None
    };
    Ok(HansonWrightReport {
        hs_norm: hs,
        op_norm: op,
        radius,
        subgaussian_moment: k,
        concentration,
        exponent,
        gaussian_identity_reference,
    })
}
