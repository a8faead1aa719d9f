//! Numerical laboratory for the smallest singular value of deformed random
//! rectangular matrices `TX - B`.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense matrices, SVD, norms, subspaces.
//! * [`ensembles`]: entry laws and counter-addressed random sampling.
//! * [`deformations`]: the deterministic factors `T` and `B`.
//! * [`reduction`]: truncation, centering and rescaling of `X`.
//! * [`geometry`]: compressible/incompressible vectors, spread sets, nets.
//! * [`arithmetic`]: least common denominators and small-ball estimates.
//! * [`experiments`]: seeded Monte Carlo checks built from the above.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arithmetic;
pub mod deformations;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod parallel;
pub mod reduction;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{Matrix, Subspace};
pub use parallel::Execution;
