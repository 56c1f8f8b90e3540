//! Column-major dense matrices and the Cholesky factorization.

use std::ops::{Index, IndexMut};

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};

use crate::assembly::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.nrows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.nrows + i]
    }
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_columns(nrows: usize, columns: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(nrows * columns.len());
        for c in columns {
            assert_eq!(c.len(), nrows);
            data.extend_from_slice(c);
        }
        DenseMatrix {
            nrows,
            ncols: columns.len(),
            data,
        }
    }

    pub fn from_sparse(a: &SparseMatrix) -> Self {
        let mut m = Self::zeros(a.n_rows(), a.n_cols());
        for i in 0..a.n_rows() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.nrows, self.ncols)
    }

    pub(crate) fn as_faer_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_column_major_slice_mut(&mut self.data, self.nrows, self.ncols)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, rhs.nrows, "matmul inner dimension");
        let mut out = Self::zeros(self.nrows, rhs.ncols);
        matmul(out.as_faer_mut(), Accum::Replace, self.as_faer(), rhs.as_faer(), 1.0, Par::Seq);
        out
    }

    /// `selfᵀ rhs`.
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.nrows, rhs.nrows, "transpose matmul inner dimension");
        let mut out = Self::zeros(self.ncols, rhs.ncols);
        matmul(out.as_faer_mut(), Accum::Replace, self.as_faer().transpose(), rhs.as_faer(), 1.0, Par::Seq);
        out
    }

    /// Sparse times dense.
    pub fn sparse_mul(a: &SparseMatrix, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(a.n_cols(), x.nrows);
        let mut out = Self::zeros(a.n_rows(), x.ncols);
        for j in 0..x.ncols {
            a.mul_vec_into(x.col(j), out.col_mut(j));
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            for (yi, a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        y
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols).map(|j| dot(self.col(j), x)).collect()
    }

    /// Replaces `self` by `(self + selfᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for i in 0..j {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.ncols).all(|j| (0..j).all(|i| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    /// Lower Cholesky factor `L` with `self = L Lᵀ`.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        let n = self.nrows;
        if self.ncols != n {
            return Err(Error::DimensionMismatch {
                context: "Cholesky (square matrix)",
                expected: n,
                got: self.ncols,
            });
        }
        let mut l = self.clone();
        for j in 0..n {
            // Left-looking column update: l[j.., j] -= L[j.., ..j] L[j, ..j]ᵀ
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk != 0.0 {
                    let (left, right) = l.data.split_at_mut(j * n);
                    let src = &left[k * n + j..k * n + n];
                    for (d, s) in right[j..n].iter_mut().zip(src) {
                        *d -= ljk * s;
                    }
                }
            }
            let d = l[(j, j)];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { column: j });
            }
            let s = d.sqrt();
            l[(j, j)] = s;
            for i in j + 1..n {
                l[(i, j)] /= s;
            }
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Ok(l)
    }

    /// Inverse of a lower triangular matrix.
    pub fn lower_inverse(&self) -> Result<DenseMatrix> {
        let n = self.nrows;
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            // Column j of L⁻¹ solves L x = e_j; entries above j vanish.
            let col = inv.col_mut(j);
            col[j] = 1.0;
            for k in j..n {
                let lkk = self[(k, k)];
                if lkk == 0.0 {
                    return Err(Error::SingularPivot { index: k });
                }
                col[k] /= lkk;
                let xk = col[k];
                if xk != 0.0 {
                    for (c, l) in col[k + 1..].iter_mut().zip(&self.col(k)[k + 1..]) {
                        *c -= l * xk;
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Solves `L x = b` in place for lower triangular `self`.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.nrows;
        for k in 0..n {
            b[k] /= self[(k, k)];
            let bk = b[k];
            for (bi, l) in b[k + 1..].iter_mut().zip(&self.col(k)[k + 1..]) {
                *bi -= l * bk;
            }
        }
    }

    /// Solves `Lᵀ x = b` in place for lower triangular `self`.
    pub fn solve_lower_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.nrows;
        for k in (0..n).rev() {
            let s = dot(&self.col(k)[k + 1..], &b[k + 1..]);
            b[k] = (b[k] - s) / self[(k, k)];
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
