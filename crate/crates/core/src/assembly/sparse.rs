//! Compressed sparse row matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// CSR matrix with sorted, duplicate-free column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed
    /// in the order they appear, so a fixed input order gives bitwise
    /// reproducible values.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if v.is_nan() {
                return Err(Error::InvalidArgument(format!("NaN entry at ({i}, {j})")));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // Stable sort keeps the summation order of duplicates deterministic.
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Wraps raw CSR arrays after checking the structural invariants.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 {
            return Err(Error::InvalidArgument("row pointer array has the wrong shape".into()));
        }
        if *row_ptr.last().unwrap() != col_idx.len() || col_idx.len() != values.len() {
            return Err(Error::InvalidArgument("CSR array lengths disagree".into()));
        }
        for i in 0..n_rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::InvalidArgument(format!("row pointer decreases at row {i}")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!("columns of row {i} not strictly increasing")));
            }
            if cols.last().is_some_and(|&j| j >= n_cols) {
                return Err(Error::InvalidArgument(format!("column index out of range in row {i}")));
            }
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidArgument(format!("NaN stored at position {k}")));
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the stored values; the pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Storage position of entry `(i, j)`, if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// Copy of `self` carrying new values on the same pattern.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.nnz());
        SparseMatrix {
            values,
            ..self.clone()
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "matvec: input length");
        assert_eq!(y.len(), self.n_rows, "matvec: output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    /// `selfᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "transpose matvec: input length");
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `xᵀ self y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                x[i] * cols.iter().zip(vals).map(|(&j, v)| v * y[j]).sum::<f64>()
            })
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `a·self + b·other`; the result pattern is the union of both patterns.
    pub fn lin_comb(&self, a: f64, other: &SparseMatrix, b: f64) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        if self.same_pattern(other) {
            let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
            return self.with_values(values);
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < c1.len() || q < c2.len() {
                let j1 = c1.get(p).copied().unwrap_or(usize::MAX);
                let j2 = c2.get(q).copied().unwrap_or(usize::MAX);
                if j1 == j2 {
                    col_idx.push(j1);
                    values.push(a * v1[p] + b * v2[q]);
                    p += 1;
                    q += 1;
                } else if j1 < j2 {
                    col_idx.push(j1);
                    values.push(a * v1[p]);
                    p += 1;
                } else {
                    col_idx.push(j2);
                    values.push(b * v2[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Submatrix with the given rows and columns, in the given order.
    /// Column indices must be increasing.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let mut map = vec![usize::MAX; self.n_cols];
        for (k, &j) in cols.iter().enumerate() {
            map[j] = k;
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(x);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            n_rows: rows.len(),
            n_cols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.n_cols];
        for (&j, v) in self.col_idx.iter().zip(&self.values) {
            sums[j] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.n_rows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| (v - self.get(j, i)).abs() <= tol * scale)
        })
    }

    /// Row-major dense copy.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Coordinate text: one `row col value` line per stored entry, 0-based.
    pub fn format_coordinate(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {j} {v:e}").unwrap();
            }
        }
        out
    }

    pub fn write_coordinate(&self, path: &Path) -> Result<()> {
        fs::write(path, self.format_coordinate()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            4,
            &[(0, 1, 2.0), (2, 3, -1.0), (0, 1, 1.0), (1, 0, 4.0), (2, 0, 5.0)],
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = example();
        assert_eq!(a.row_ptr(), &[0, 1, 2, 4]);
        assert_eq!(a.col_idx(), &[1, 0, 0, 3]);
        assert_eq!(a.values(), &[3.0, 4.0, 5.0, -1.0]);
        assert_eq!(a.get(2, 3), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn rejects_nan_and_out_of_range() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(0, 0, f64::NAN)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn transpose_and_products() {
        let a = example();
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, -1.0, 2.0];
        assert_eq!(a.mul_vec(&x), vec![6.0, 4.0, 1.0]);
        let at = a.transpose();
        assert_eq!(at.mul_vec(&y), a.tr_mul_vec(&y));
        assert_eq!(at.transpose(), a);
        let direct: f64 = y.iter().zip(a.mul_vec(&x)).map(|(a, b)| a * b).sum();
        assert_eq!(a.bilinear(&y, &x), direct);
    }

    #[test]
    fn lin_comb_union_pattern() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let b = SparseMatrix::from_triplets(2, 2, &[(0, 1, 2.0), (1, 1, 3.0)]).unwrap();
        let c = a.lin_comb(2.0, &b, -1.0);
        assert_eq!(c.to_dense_rows(), vec![vec![2.0, -2.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn select_and_norms() {
        let a = example();
        let s = a.select(&[2, 0], &[0, 1]);
        assert_eq!(s.to_dense_rows(), vec![vec![5.0, 0.0], vec![0.0, 3.0]]);
        assert_eq!(a.norm1(), 9.0);
        assert!(SparseMatrix::identity(3).is_symmetric(0.0));
        assert!(!a.is_symmetric(1e-12));
    }

    #[test]
    fn coordinate_dump() {
        let text = SparseMatrix::identity(2).format_coordinate();
        assert_eq!(text, "0 0 1e0\n1 1 1e0\n");
    }

    proptest! {
        #[test]
        fn from_triplets_matches_dense_accumulation(
            entries in proptest::collection::vec((0usize..6, 0usize..5, -10.0..10.0f64), 0..40)
        ) {
            let a = SparseMatrix::from_triplets(6, 5, &entries).unwrap();
            let mut dense = vec![vec![0.0; 5]; 6];
            for &(i, j, v) in &entries {
                dense[i][j] += v;
            }
            let got = a.to_dense_rows();
            for i in 0..6 {
                for j in 0..5 {
                    prop_assert!((got[i][j] - dense[i][j]).abs() < 1e-12);
                }
                let (cols, _) = a.row(i);
                prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
