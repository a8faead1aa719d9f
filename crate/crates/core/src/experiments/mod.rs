//! Seeded Monte Carlo harness. Every trial derives its randomness from
//! `(master_seed, trial index)` only, so records do not depend on how trials
//! are scheduled across workers.

mod checks;
mod distance;
mod tail;

pub use checks::{
    decoupling_check, tensorization_check, DecouplingConfig, DecouplingMatrix, DecouplingPoint, DecouplingResult,
    TensorizationConfig, TensorizationPartOne, TensorizationPartTwo, TensorizationResult, ZetaLaw,
};
pub use distance::{
    distance_experiment, random_subspace_incompressibility, DistanceResult, DistanceTrial, LcdSummary,
    SubspaceIncompResult,
};
pub use tail::{
    edge_convergence, reduce_verify, tail_probability, EdgeReport, ReduceTrial, ReduceVerifyResult, TailResult,
    TrialStat,
};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::arithmetic::LcdParams;
use crate::deformations::{build_b, build_t, DeformationSpec, DimensionConfig, FactorizedT};
use crate::ensembles::{EntryDistribution, SeedSpec};
use crate::error::{Error, Result};
use crate::geometry::SparsityParams;
use crate::linalg::Matrix;
use crate::reduction::{reduce, TruncationParams};
use crate::stats::Proportion;

pub const SCHEMA_VERSION: u32 = 1;

/// Whether the tail is measured on `T X - B` or on the reduced `P Y - A`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelForm {
    #[default]
    Direct,
    Reduced,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    #[default]
    Zero,
    Random,
}

fn default_deformation() -> DeformationSpec {
    DeformationSpec::trivial()
}

fn default_beta() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: DimensionConfig,
    pub dist: EntryDistribution,
    #[serde(default = "default_deformation")]
    pub deformation: DeformationSpec,
    #[serde(default)]
    pub truncation: Option<TruncationParams>,
    #[serde(default)]
    pub sparsity: SparsityParams,
    #[serde(default)]
    pub lcd: LcdParams,
    pub epsilon_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    /// Threshold multiplier `N^{-tau}`.
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub form: ModelForm,
    /// `|J|` for the distance and subspace experiments; defaults to
    /// `min{d, floor(rho^2 delta n / 2)}`.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub shift: ShiftKind,
    /// Cap on `l / N`.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl ExperimentConfig {
    /// A square-free default: `T = (I | 0)`, `B = 0`.
    pub fn new(dims: DimensionConfig, dist: EntryDistribution, epsilon_grid: Vec<f64>, trials: u64, master_seed: u64) -> Self {
        ExperimentConfig {
            dims,
            dist,
            deformation: DeformationSpec::trivial(),
            truncation: None,
            sparsity: SparsityParams::default(),
            lcd: LcdParams::default(),
            epsilon_grid,
            trials,
            master_seed,
            tau: 0.0,
            form: ModelForm::Direct,
            m: None,
            shift: ShiftKind::Zero,
            beta: default_beta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.dist.validate()?;
        self.sparsity.validate()?;
        self.lcd.validate()?;
        if let Some(tp) = &self.truncation {
            tp.validate()?;
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        check_grid(&self.epsilon_grid)?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta = {} outside (0, 1]", self.beta)));
        }
        Ok(())
    }

    pub fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.master_seed, 0)
    }

    /// `N^{-tau} (sqrt(N) - sqrt(n - 1))`.
    pub fn threshold_unit(&self) -> f64 {
        (self.dims.big_n as f64).powf(-self.tau) * self.dims.edge_scale()
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon grid".into()));
    }
    if grid.iter().any(|e| !(e.is_finite() && *e >= 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("epsilon grid {grid:?} must be nonnegative and strictly increasing")));
    }
    Ok(())
}

/// One row of an estimate-versus-epsilon curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub threshold: f64,
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl CurvePoint {
    pub fn new(epsilon: f64, threshold: f64, hits: u64, trials: u64) -> Self {
        let p = Proportion::new(hits, trials);
        CurvePoint { epsilon, threshold, hits, trials, estimate: p.estimate, ci_lo: p.ci_lo, ci_hi: p.ci_hi }
    }
}

pub const CURVE_CSV_HEADER: &str = "epsilon,hits,trials,estimate,ci_lo,ci_hi";

/// CSV with 17 significant digits and `.` as the decimal separator.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in curve {
        out.push_str(&format!(
            "{:.16e},{},{},{:.16e},{:.16e},{:.16e}\n",
            p.epsilon, p.hits, p.trials, p.estimate, p.ci_lo, p.ci_hi
        ));
    }
    out
}

/// JSON with object keys sorted and no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(sorted(v).to_string())
}

fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the canonical JSON of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(&canonical_json(config)?))
}

/// Hash of `config` with its top-level `master_seed` removed; records that
/// differ only by seed share it and may be pooled.
pub fn family_hash<T: Serialize>(config: &T) -> Result<String> {
    let mut v = serde_json::to_value(config).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.remove("master_seed");
    }
    Ok(sha256_hex(&sorted(v).to_string()))
}

/// Envelope written as one JSONL line per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord<T> {
    pub schema_version: u32,
    pub kind: String,
    pub code_version: String,
    pub config_hash: String,
    pub family_hash: String,
    pub config: Value,
    pub result: T,
}

impl<T: Serialize> ExperimentRecord<T> {
    pub fn new<C: Serialize>(kind: &str, config: &C, result: T) -> Result<Self> {
        Ok(ExperimentRecord {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config)?,
            family_hash: family_hash(config)?,
            config: sorted(serde_json::to_value(config).map_err(|e| Error::InvalidParameter(e.to_string()))?),
            result,
        })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut line = serde_json::to_string(self).map_err(|e| Error::Numerical(e.to_string()))?;
        line.push('\n');
        Ok(line)
    }
}

/// `T`, its factorization and `B`, built once per run.
pub(crate) struct Model {
    pub t: Matrix,
    pub f: FactorizedT,
    pub b: Matrix,
}

impl Model {
    pub fn build(dims: &DimensionConfig, deformation: &DeformationSpec) -> Result<Self> {
        let (t, f) = build_t(dims, deformation)?;
        let b = build_b(dims, deformation)?;
        Ok(Model { t, f, b })
    }

    /// `(Y, A, truncation hits)`. Without truncation `Y = X` and
    /// `A = D^{-1} U^T B`, since every supported law is centered with unit variance.
    pub fn reduced(
        &self,
        x: &Matrix,
        dist: &EntryDistribution,
        truncation: Option<&TruncationParams>,
    ) -> Result<(Matrix, Matrix, Option<usize>)> {
        match truncation {
            Some(tp) => {
                let rm = reduce(x, &self.f, &self.b, std::slice::from_ref(dist), tp)?;
                Ok((rm.y, rm.a, Some(rm.truncation_hit_count)))
            }
            None => {
                let inv_d: Vec<f64> = self.f.d.iter().map(|v| 1.0 / v).collect();
                let a = (&self.f.u.transpose() * &self.b).scale_rows(&inv_d);
                Ok((x.clone(), a, None))
            }
        }
    }
}
