//! Entry distributions with mean 0 and variance 1, and counter-addressed
//! sampling of random matrices.
//!
//! Every draw is addressed by `(master_seed, stream_id, index)`. The master
//! seed and a purpose lane form the ChaCha8 key, the stream id selects the
//! ChaCha stream, and entry `index` occupies words `[4*index, 4*index + 4)`
//! of that stream (each entry consumes exactly two `u64`). The mapping is
//! injective, so samples never depend on evaluation order or worker count.

use std::f64::consts::{E, PI};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Law of a single matrix entry. Each kind has exact mean 0 and variance 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryDistribution {
    Rademacher,
    Gaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    UniformScaled,
    /// `Exp(1) - 1`.
    CenteredExponential,
    /// Two atoms with `P(sqrt((1-p)/p)) = p`, `P(-sqrt(p/(1-p))) = 1 - p`.
    TwoPointSkewed { p: f64 },
    /// `(e^G - e^{1/2}) / sqrt((e - 1) e)` with `G` standard normal.
    LognormalStandardized,
}

const LN2: f64 = std::f64::consts::LN_2;

impl EntryDistribution {
    pub fn validate(&self) -> Result<()> {
        if let EntryDistribution::TwoPointSkewed { p } = *self {
            if !(0.05..=0.95).contains(&p) {
                return Err(Error::InvalidParameter(format!("two_point_skewed p = {p} outside [0.05, 0.95]")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntryDistribution::Rademacher => "rademacher",
            EntryDistribution::Gaussian => "gaussian",
            EntryDistribution::UniformScaled => "uniform_scaled",
            EntryDistribution::CenteredExponential => "centered_exponential",
            EntryDistribution::TwoPointSkewed { .. } => "two_point_skewed",
            EntryDistribution::LognormalStandardized => "lognormal_standardized",
        }
    }

    /// Atoms `(value, probability)` for two-point laws.
    pub(crate) fn two_point_atoms(p: f64) -> [(f64, f64); 2] {
        [(((1.0 - p) / p).sqrt(), p), (-(p / (1.0 - p)).sqrt(), 1.0 - p)]
    }

    /// Declared subgaussian moment `K` with `P(|xi| > t) <= 2 exp(-t^2/K^2)`;
    /// `None` for laws without subgaussian tails.
    pub fn subgaussian_moment(&self) -> Option<f64> {
        // For bounded laws with |xi| <= A, K = A / sqrt(ln 2) works: the
        // bound is >= 1 for t < A and the tail vanishes beyond A.
        match *self {
            EntryDistribution::Rademacher => Some(1.0 / LN2.sqrt()),
            EntryDistribution::Gaussian => Some(2f64.sqrt()),
            EntryDistribution::UniformScaled => Some(3f64.sqrt() / LN2.sqrt()),
            EntryDistribution::TwoPointSkewed { p } => {
                let [(a, _), (b, _)] = Self::two_point_atoms(p);
                Some(a.abs().max(b.abs()) / LN2.sqrt())
            }
            EntryDistribution::CenteredExponential | EntryDistribution::LognormalStandardized => None,
        }
    }

    /// Declared bound on `E|xi|^3`.
    pub fn third_moment_bound(&self) -> f64 {
        match *self {
            EntryDistribution::Rademacher => 1.0,
            EntryDistribution::Gaussian => 2.0 * (2.0 / PI).sqrt(),
            EntryDistribution::UniformScaled => 3.0 * 3f64.sqrt() / 4.0,
            EntryDistribution::CenteredExponential => 2.414_553_294_057_308,
            EntryDistribution::TwoPointSkewed { p } => ((1.0 - p).powi(2) + p * p) / (p * (1.0 - p)).sqrt(),
            EntryDistribution::LognormalStandardized => 6.349_971_674_211_465,
        }
    }

    /// Exact `E xi^4`.
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            EntryDistribution::Rademacher => 1.0,
            EntryDistribution::Gaussian => 3.0,
            EntryDistribution::UniformScaled => 9.0 / 5.0,
            EntryDistribution::CenteredExponential => 9.0,
            EntryDistribution::TwoPointSkewed { p } => (1.0 - p).powi(2) / p + p * p / (1.0 - p),
            EntryDistribution::LognormalStandardized => E.powi(4) + 2.0 * E.powi(3) + 3.0 * E * E - 3.0,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, EntryDistribution::Rademacher | EntryDistribution::TwoPointSkewed { .. })
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(
            self,
            EntryDistribution::Rademacher | EntryDistribution::Gaussian | EntryDistribution::UniformScaled
        )
    }

    /// Draws one value, consuming exactly two `u64` from `rng`.
    #[inline]
    pub fn draw<R: RngCore>(&self, rng: &mut R) -> f64 {
        let w1 = rng.next_u64();
        let w2 = rng.next_u64();
        match *self {
            EntryDistribution::Rademacher => {
                if w1 >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::Gaussian => box_muller(w1, w2),
            EntryDistribution::UniformScaled => (2.0 * unit_open(w1) - 1.0) * 3f64.sqrt(),
            EntryDistribution::CenteredExponential => -unit_open(w1).ln() - 1.0,
            EntryDistribution::TwoPointSkewed { p } => {
                let [(a, _), (b, _)] = Self::two_point_atoms(p);
                if unit_open(w1) <= p {
                    a
                } else {
                    b
                }
            }
            EntryDistribution::LognormalStandardized => {
                let g = box_muller(w1, w2);
                (g.exp() - 0.5f64.exp()) / ((E - 1.0) * E).sqrt()
            }
        }
    }
}

/// Uniform on `(0, 1]` from the top 53 bits.
#[inline]
fn unit_open(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(w1: u64, w2: u64) -> f64 {
    let r = (-2.0 * unit_open(w1).ln()).sqrt();
    r * (2.0 * PI * unit_open(w2)).cos()
}

/// Address of a random stream: `(master_seed, stream_id)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

/// Independent key lanes, so that e.g. the rotation of `T` and the entries
/// of `X` never share a stream even with equal stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Entries = 0,
    RotationU = 1,
    RotationV = 2,
    ShiftLeft = 3,
    ShiftRight = 4,
    Subset = 5,
    Fresh = 6,
    Center = 7,
    Probe = 8,
    Direction = 9,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec { master_seed, stream_id }
    }

    /// Stream for trial `t` of a run rooted at `self`.
    pub fn trial(&self, t: u64) -> SeedSpec {
        SeedSpec { master_seed: self.master_seed, stream_id: self.stream_id.wrapping_add(t) }
    }

    /// Generator positioned at index 0 of the entries lane.
    pub fn rng(&self) -> ChaCha8Rng {
        self.rng_in(Lane::Entries)
    }

    /// Generator positioned at index 0 of the given lane.
    pub fn rng_in(&self, lane: Lane) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&(lane as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// The `index`-th entry of the stream `seed`.
pub fn sample_entry(dist: &EntryDistribution, seed: SeedSpec, index: u64) -> f64 {
    let mut rng = seed.rng();
    rng.set_word_pos(4 * index as u128);
    dist.draw(&mut rng)
}

/// `rows x cols` matrix of i.i.d. entries; entry `(i, j)` has index `i*cols + j`.
pub fn sample_matrix(rows: usize, cols: usize, dist: &EntryDistribution, seed: SeedSpec) -> Matrix {
    sample_matrix_in(rows, cols, std::slice::from_ref(dist), seed, Lane::Entries)
}

/// Matrix whose column `j` follows `dists[j]` (or `dists[0]` if only one law
/// is given). Rows are independent copies of the column vector law.
pub fn sample_matrix_columns(rows: usize, cols: usize, dists: &[EntryDistribution], seed: SeedSpec) -> Matrix {
    sample_matrix_in(rows, cols, dists, seed, Lane::Entries)
}

pub(crate) fn sample_matrix_in(
    rows: usize,
    cols: usize,
    dists: &[EntryDistribution],
    seed: SeedSpec,
    lane: Lane,
) -> Matrix {
    assert!(!dists.is_empty() && (dists.len() == 1 || dists.len() == cols));
    let mut rng = seed.rng_in(lane);
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        for j in 0..cols {
            let d = if dists.len() == 1 { &dists[0] } else { &dists[j] };
            entries.push(d.draw(&mut rng));
        }
    }
    Matrix::from_row_major(rows, cols, entries).expect("samplers produce finite values")
}

/// Standard Gaussian vector of length `n` in the given lane.
pub(crate) fn gaussian_vector(n: usize, seed: SeedSpec, lane: Lane) -> Vec<f64> {
    let mut rng = seed.rng_in(lane);
    (0..n).map(|_| EntryDistribution::Gaussian.draw(&mut rng)).collect()
}

/// Uniform point on `S^{n-1}`.
pub fn sample_unit_vector(n: usize, seed: SeedSpec) -> Vec<f64> {
    sample_unit_vector_in(n, seed, Lane::Direction)
}

pub(crate) fn sample_unit_vector_in(n: usize, seed: SeedSpec, lane: Lane) -> Vec<f64> {
    let mut rng = seed.rng_in(lane);
    loop {
        let g: Vec<f64> = (0..n).map(|_| EntryDistribution::Gaussian.draw(&mut rng)).collect();
        let norm = crate::linalg::norm2(&g);
        if norm > 1e-300 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Haar orthogonal `dim x dim` matrix: Gaussian QR with `diag(R) > 0`.
pub fn sample_orthogonal(dim: usize, seed: SeedSpec) -> Matrix {
    sample_orthogonal_in(dim, seed, Lane::Entries)
}

pub(crate) fn sample_orthogonal_in(dim: usize, seed: SeedSpec, lane: Lane) -> Matrix {
    let g = sample_matrix_in(dim, dim, &[EntryDistribution::Gaussian], seed, lane).into_nalgebra();
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    Matrix::from_nalgebra_unchecked(q)
}
