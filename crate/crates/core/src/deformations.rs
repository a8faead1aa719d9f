//! Deterministic deformations: the `N x M` multiplier `T = U D V_1` and the
//! `N x n` shift `B`.

use serde::{Deserialize, Serialize};

use crate::ensembles::{gaussian_vector, sample_orthogonal_in, Lane, SeedSpec};
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix, ORTHO_TOL};

/// Dimensions `n <= N <= M <= lambda_cap * N` and the conditioning constant `K0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "M")]
    pub big_m: usize,
    #[serde(default = "one")]
    pub lambda_cap: f64,
    #[serde(default = "one")]
    pub k0: f64,
}

fn one() -> f64 {
    1.0
}

impl DimensionConfig {
    pub fn new(n: usize, big_n: usize, big_m: usize, lambda_cap: f64, k0: f64) -> Result<Self> {
        let cfg = DimensionConfig { n, big_n, big_m, lambda_cap, k0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Square `n = N = M` configuration with `Lambda = K0 = 1`.
    pub fn square(n: usize) -> Self {
        DimensionConfig { n, big_n: n, big_m: n, lambda_cap: 1.0, k0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if !(self.lambda_cap >= 1.0) || !(self.k0 >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda_cap = {} and k0 = {} must be >= 1",
                self.lambda_cap, self.k0
            )));
        }
        if !(self.n <= self.big_n && self.big_n <= self.big_m) {
            return Err(Error::InvalidParameter(format!(
                "need n <= N <= M, got n = {}, N = {}, M = {}",
                self.n, self.big_n, self.big_m
            )));
        }
        if self.big_m as f64 > self.lambda_cap * self.big_n as f64 {
            return Err(Error::InvalidParameter(format!(
                "M = {} exceeds lambda_cap * N = {}",
                self.big_m,
                self.lambda_cap * self.big_n as f64
            )));
        }
        Ok(())
    }

    /// `d = N - n + 1`.
    pub fn d(&self) -> usize {
        self.big_n - self.n + 1
    }

    /// Aspect ratio `n / N`.
    pub fn aspect(&self) -> f64 {
        self.n as f64 / self.big_n as f64
    }

    /// Hard-edge scale `sqrt(N) - sqrt(n - 1)`.
    pub fn edge_scale(&self) -> f64 {
        (self.big_n as f64).sqrt() - ((self.n - 1) as f64).sqrt()
    }
}

/// Eigenvalues of `T T^T`, as a list or a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumSpec {
    Constant { value: f64 },
    /// Evenly spaced from `max` down to `min`.
    Linear { max: f64, min: f64 },
    Explicit { values: Vec<f64> },
}

impl SpectrumSpec {
    /// Resolves to `N` values sorted nonincreasing.
    pub fn resolve(&self, big_n: usize) -> Result<Vec<f64>> {
        let mut v = match self {
            SpectrumSpec::Constant { value } => vec![*value; big_n],
            SpectrumSpec::Linear { max, min } => {
                if big_n == 1 {
                    vec![*max]
                } else {
                    (0..big_n).map(|i| max + (min - max) * i as f64 / (big_n - 1) as f64).collect()
                }
            }
            SpectrumSpec::Explicit { values } => {
                if values.len() != big_n {
                    return Err(Error::Dimension(format!("spectrum has {} values, N = {big_n}", values.len())));
                }
                values.clone()
            }
        };
        v.sort_by(|a, b| b.total_cmp(a));
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    Identity,
    #[default]
    Haar,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BKind {
    #[default]
    Zero,
    RankOne,
    HaarRotatedDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationSpec {
    pub singular_spectrum: SpectrumSpec,
    #[serde(default)]
    pub rotations: RotationMode,
    pub rotation_seed: SeedSpec,
    #[serde(default)]
    pub b_norm_target: f64,
    #[serde(default)]
    pub b_kind: BKind,
}

impl DeformationSpec {
    /// `T = (I_N | 0)`, `B = 0`.
    pub fn trivial() -> Self {
        DeformationSpec {
            singular_spectrum: SpectrumSpec::Constant { value: 1.0 },
            rotations: RotationMode::Identity,
            rotation_seed: SeedSpec::new(0, 0),
            b_norm_target: 0.0,
            b_kind: BKind::Zero,
        }
    }
}

/// `T = u * diag(d) * v1` where `(v1; v2)` is an `M x M` orthogonal matrix.
#[derive(Clone, Debug)]
pub struct FactorizedT {
    pub u: Matrix,
    pub d: Vec<f64>,
    pub v1: Matrix,
    pub v2: Matrix,
}

impl FactorizedT {
    pub fn big_n(&self) -> usize {
        self.u.rows()
    }

    pub fn big_m(&self) -> usize {
        self.v1.cols()
    }

    pub fn assemble(&self) -> Matrix {
        &self.u.scale_cols(&self.d) * &self.v1
    }
}

/// Builds `T` with `T T^T` having the requested eigenvalues, `d_i = sqrt(sigma_i)`.
pub fn build_t(cfg: &DimensionConfig, spec: &DeformationSpec) -> Result<(Matrix, FactorizedT)> {
    cfg.validate()?;
    let (n_big, m_big) = (cfg.big_n, cfg.big_m);
    let sigma = spec.singular_spectrum.resolve(n_big)?;
    let lo = 1.0 / cfg.k0;
    if let Some(&bad) = sigma.iter().find(|&&s| !(s >= lo * (1.0 - 1e-12) && s <= cfg.k0 * (1.0 + 1e-12))) {
        return Err(Error::SpectrumOutOfRange { value: bad, k0: cfg.k0 });
    }
    let d: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let (u, v) = match spec.rotations {
        RotationMode::Identity => (Matrix::identity(n_big), Matrix::identity(m_big)),
        RotationMode::Haar => (
            sample_orthogonal_in(n_big, spec.rotation_seed, Lane::RotationU),
            sample_orthogonal_in(m_big, spec.rotation_seed, Lane::RotationV),
        ),
    };
    let v1 = v.select_rows(&(0..n_big).collect::<Vec<_>>());
    let v2 = v.select_rows(&(n_big..m_big).collect::<Vec<_>>());
    let f = FactorizedT { u, d, v1, v2 };
    Ok((f.assemble(), f))
}

/// Builds the `N x n` shift with operator norm `b_norm_target`.
pub fn build_b(cfg: &DimensionConfig, spec: &DeformationSpec) -> Result<Matrix> {
    cfg.validate()?;
    let (n_big, n) = (cfg.big_n, cfg.n);
    let bound = cfg.k0 * (n_big as f64).sqrt();
    let target = spec.b_norm_target;
    if !(target >= 0.0) {
        return Err(Error::InvalidParameter(format!("b_norm_target = {target}")));
    }
    if target > bound * (1.0 + 1e-12) {
        return Err(Error::BNormTooLarge { target, bound });
    }
    let seed = spec.rotation_seed;
    match spec.b_kind {
        BKind::Zero => Ok(Matrix::zeros(n_big, n)),
        BKind::RankOne => {
            let (left, right) = match spec.rotations {
                RotationMode::Identity => (unit_basis(n_big, 0), unit_basis(n, 0)),
                RotationMode::Haar => (
                    normalized(gaussian_vector(n_big, seed, Lane::ShiftLeft)),
                    normalized(gaussian_vector(n, seed, Lane::ShiftRight)),
                ),
            };
            Ok(Matrix::from_fn(n_big, n, |i, j| target * left[i] * right[j]))
        }
        BKind::HaarRotatedDiagonal => {
            // Singular values target * (n - i) / n, i = 0..n.
            let diag: Vec<f64> = (0..n).map(|i| target * (n - i) as f64 / n as f64).collect();
            let left = sample_orthogonal_in(n_big, seed, Lane::ShiftLeft);
            let right = sample_orthogonal_in(n, seed, Lane::ShiftRight);
            let left_n = left.select_columns(&(0..n).collect::<Vec<_>>());
            Ok(&left_n.scale_cols(&diag) * &right.transpose())
        }
    }
}

fn unit_basis(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s = norm2(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// The row-orthonormal projection `P = V_1` with `P P^T = I_N`.
pub fn projection_p(f: &FactorizedT) -> Result<Matrix> {
    let ppt = &f.v1 * &f.v1.transpose();
    let residual = ppt.max_abs_diff(&Matrix::identity(f.v1.rows()));
    if residual > ORTHO_TOL {
        return Err(Error::NotOrthonormal { residual });
    }
    Ok(f.v1.clone())
}
