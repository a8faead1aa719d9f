//! Dense real matrices, singular values, norms and subspace distances.
//!
//! Storage and the Golub-Kahan SVD come from `nalgebra`; this module wraps
//! them behind a finite-only [`Matrix`] type and the handful of operations
//! the rest of the crate needs.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for orthonormality checks on bases and orthogonal factors.
pub const ORTHO_TOL: f64 = 1e-10;

/// Dense real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch { rows, cols, len: entries.len() });
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / cols.max(1), col: k % cols.max(1) });
        }
        Ok(Matrix(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    /// Wraps a nalgebra matrix after checking finiteness.
    pub fn from_nalgebra(m: DMatrix<f64>) -> Result<Self> {
        let m = Matrix(m);
        m.check_finite()?;
        Ok(m)
    }

    pub(crate) fn from_nalgebra_unchecked(m: DMatrix<f64>) -> Self {
        Matrix(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Matrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_columns(ambient: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if let Some(c) = columns.iter().find(|c| c.len() != ambient) {
            return Err(Error::Dimension(format!("column of length {} in R^{ambient}", c.len())));
        }
        Matrix::from_nalgebra(DMatrix::from_fn(ambient, columns.len(), |i, j| columns[j][i]))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Matrix(DMatrix::from_diagonal(&DVector::from_row_slice(values)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_nalgebra(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            out.extend(self.0.row(i).iter());
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        Matrix(self.0.select_columns(cols.iter()))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        Matrix(self.0.select_rows(rows.iter()))
    }

    /// `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> Matrix {
        assert_eq!(d.len(), self.rows());
        let mut m = self.0.clone();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row *= d[i];
        }
        Matrix(m)
    }

    /// `self * diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Matrix {
        assert_eq!(d.len(), self.cols());
        let mut m = self.0.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= d[j];
        }
        Matrix(m)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix(&self.0 * c)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols());
        let v = &self.0 * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows(), self.cols()), (other.rows(), other.cols()));
        self.0.iter().zip(other.0.iter()).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn check_finite(&self) -> Result<()> {
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                if !self.0[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 - &rhs.0)
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn add(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 + &rhs.0)
    }
}

/// Thin SVD `a = u * diag(s) * vt` with `s` nonincreasing.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        &self.u.scale_cols(&self.s) * &self.vt
    }
}

/// Singular value decomposition with singular values sorted nonincreasing.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    a.check_finite()?;
    let k = a.rows().min(a.cols());
    if k == 0 {
        return Ok(SvdResult { u: Matrix::zeros(a.rows(), 0), s: vec![], vt: Matrix::zeros(0, a.cols()) });
    }
    let dec = a.0.clone().svd_unordered(true, true);
    let (u, vt) = match (dec.u, dec.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD did not produce singular vectors".into())),
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let s = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u = u.select_columns(order.iter());
    let vt = vt.select_rows(order.iter());
    Ok(SvdResult { u: Matrix(u), s, vt: Matrix(vt) })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    a.check_finite()?;
    if a.rows().min(a.cols()) == 0 {
        return Ok(vec![]);
    }
    let mut s: Vec<f64> = a.0.clone().singular_values_unordered().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// `s_n(a)` for an `N x n` matrix with `N >= n`.
pub fn smallest_singular_value(a: &Matrix) -> Result<f64> {
    if a.rows() < a.cols() {
        return Err(Error::WideMatrix { rows: a.rows(), cols: a.cols() });
    }
    Ok(singular_values(a)?.last().copied().unwrap_or(0.0))
}

pub fn operator_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm(a: &Matrix) -> f64 {
    a.0.norm()
}

/// Numerical rank threshold `max(rows, cols) * eps * s_1`.
pub fn rank_threshold(rows: usize, cols: usize, s1: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * s1
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Subspace of `R^ambient_dim` carried by an orthonormal basis (as columns).
#[derive(Clone, Debug)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Matrix,
}

impl Subspace {
    /// Accepts `basis` if its columns are orthonormal within [`ORTHO_TOL`].
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        basis.check_finite()?;
        if basis.cols() > basis.rows() {
            return Err(Error::Dimension(format!(
                "{} basis vectors in R^{}",
                basis.cols(),
                basis.rows()
            )));
        }
        let residual = gram_residual(&basis);
        if residual > ORTHO_TOL {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(Subspace { ambient_dim: basis.rows(), basis })
    }

    /// Orthonormal basis of the column span of `vectors`, with numerical
    /// rank decided by [`rank_threshold`].
    pub fn span_of(vectors: &Matrix) -> Result<Self> {
        let ambient = vectors.rows();
        if vectors.cols() == 0 {
            return Ok(Subspace::zero(ambient));
        }
        let dec = svd(vectors)?;
        let tol = rank_threshold(vectors.rows(), vectors.cols(), dec.s[0]);
        let rank = dec.s.iter().take_while(|&&s| s > tol).count();
        let keep: Vec<usize> = (0..rank).collect();
        Ok(Subspace { ambient_dim: ambient, basis: dec.u.select_columns(&keep) })
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Subspace { ambient_dim, basis: Matrix::zeros(ambient_dim, 0) }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Subspace { ambient_dim, basis: Matrix::identity(ambient_dim) }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    /// Coordinates `basis^T x`.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| self.basis.0.column(j).iter().zip(x).map(|(b, v)| b * v).sum()).collect()
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let c = self.coordinates(x);
        let mut out = vec![0.0; self.ambient_dim];
        for (j, cj) in c.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis.0.column(j).iter()) {
                *o += cj * b;
            }
        }
        out
    }

    /// Point of the subspace with the given coordinates.
    pub fn embed(&self, coords: &[f64]) -> Vec<f64> {
        assert_eq!(coords.len(), self.dim());
        self.basis.mul_vec(coords)
    }
}

fn gram_residual(basis: &Matrix) -> f64 {
    let g = basis.0.transpose() * &basis.0;
    let k = g.nrows();
    let mut r: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            r = r.max((g[(i, j)] - target).abs());
        }
    }
    r
}

/// `||x - P_h x||_2`, the distance from `x` to the subspace.
pub fn dist_to_subspace(x: &[f64], h: &Subspace) -> Result<f64> {
    if x.len() != h.ambient_dim {
        return Err(Error::Dimension(format!("vector of length {} vs R^{}", x.len(), h.ambient_dim)));
    }
    let p = h.project(x);
    Ok(x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Orthonormal basis of the orthogonal complement of `h`.
pub fn orthonormal_complement(h: &Subspace) -> Subspace {
    let n = h.ambient_dim;
    let k = h.dim();
    if k == 0 {
        return Subspace::full(n);
    }
    if k == n {
        return Subspace::zero(n);
    }
    // I - BB^T has eigenvalue 1 exactly on the complement and 0 on span(B).
    let b = &h.basis.0;
    let proj = DMatrix::identity(n, n) - b * b.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let keep: Vec<usize> = order.into_iter().take(n - k).collect();
    let mut basis = eig.eigenvectors.select_columns(keep.iter());
    reorthonormalize(&mut basis, Some(b));
    Subspace { ambient_dim: n, basis: Matrix(basis) }
}

/// One pass of modified Gram-Schmidt against `against` and then within `m`.
fn reorthonormalize(m: &mut DMatrix<f64>, against: Option<&DMatrix<f64>>) {
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        if let Some(a) = against {
            for c in a.column_iter() {
                let p = c.dot(&v);
                v.axpy(-p, &c, 1.0);
            }
        }
        for i in 0..j {
            let c = m.column(i).into_owned();
            let p = c.dot(&v);
            v.axpy(-p, &c, 1.0);
        }
        let nv = v.norm();
        m.set_column(j, &(v / nv));
    }
}

/// Serializable row-major snapshot of a matrix.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
}

impl From<&Matrix> for MatrixData {
    fn from(m: &Matrix) -> Self {
        MatrixData { rows: m.rows(), cols: m.cols(), entries: m.to_row_major() }
    }
}

impl TryFrom<MatrixData> for Matrix {
    type Error = Error;
    fn try_from(d: MatrixData) -> Result<Matrix> {
        Matrix::from_row_major(d.rows, d.cols, d.entries)
    }
}
