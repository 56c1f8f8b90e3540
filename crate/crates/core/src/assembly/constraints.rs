//! Dirichlet elimination and the constrained saddle-point operator.

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Symmetric elimination: rows and columns of constrained dofs are dropped
/// and replaced by a unit diagonal.
pub fn apply_dirichlet(k: &SparseMatrix, is_dirichlet: &[bool]) -> SparseMatrix {
    let n = k.n_rows();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::with_capacity(k.nnz());
    let mut values = Vec::with_capacity(k.nnz());
    for i in 0..n {
        if is_dirichlet[i] {
            col_idx.push(i);
            values.push(1.0);
        } else {
            let (cols, vals) = k.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !is_dirichlet[j] {
                    col_idx.push(j);
                    values.push(v);
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    SparseMatrix::from_csr(n, k.n_cols(), row_ptr, col_idx, values).expect("subset of a valid pattern")
}

/// The constrained block system
///
/// ```text
/// [ K_c   -B_cᵀ   0 ] [u]   [f_c]
/// [ -B_c    0     m ] [p] = [ g ]
/// [  0     mᵀ     0 ] [λ]   [ 0 ]
/// ```
///
/// where `K_c` and `B_c` have the Dirichlet rows and columns eliminated and
/// `m` carries the pressure mean functional. The matrix is symmetric
/// whenever `K` is. Its velocity block can be refreshed in place for any `K`
/// on the pattern used at construction.
#[derive(Clone, Debug)]
pub struct SaddleOperator {
    matrix: SparseMatrix,
    n_vel: usize,
    n_pres: usize,
    is_dirichlet: Vec<bool>,
    k_positions: Vec<Option<usize>>,
}

impl SaddleOperator {
    pub fn new(k: &SparseMatrix, b: &SparseMatrix, mean: &[f64], is_dirichlet: &[bool]) -> Result<Self> {
        let n_vel = k.n_rows();
        let n_pres = b.n_rows();
        if k.n_cols() != n_vel || b.n_cols() != n_vel || is_dirichlet.len() != n_vel {
            return Err(Error::DimensionMismatch {
                context: "saddle operator velocity blocks",
                expected: n_vel,
                got: b.n_cols(),
            });
        }
        if mean.len() != n_pres {
            return Err(Error::DimensionMismatch {
                context: "pressure mean vector",
                expected: n_pres,
                got: mean.len(),
            });
        }
        let n = n_vel + n_pres + 1;
        let kc = apply_dirichlet(k, is_dirichlet);
        let bt = b.transpose();
        let lam = n_vel + n_pres;
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n_vel {
            let (cols, vals) = kc.row(i);
            col_idx.extend_from_slice(cols);
            values.extend_from_slice(vals);
            if !is_dirichlet[i] {
                let (pc, pv) = bt.row(i);
                col_idx.extend(pc.iter().map(|j| n_vel + j));
                values.extend(pv.iter().map(|v| -v));
            }
            row_ptr.push(col_idx.len());
        }
        for i in 0..n_pres {
            let (cols, vals) = b.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !is_dirichlet[j] {
                    col_idx.push(j);
                    values.push(-v);
                }
            }
            col_idx.push(lam);
            values.push(mean[i]);
            row_ptr.push(col_idx.len());
        }
        col_idx.extend((0..n_pres).map(|j| n_vel + j));
        values.extend_from_slice(mean);
        row_ptr.push(col_idx.len());
        let matrix = SparseMatrix::from_csr(n, n, row_ptr, col_idx, values)?;

        let mut k_positions = Vec::with_capacity(k.nnz());
        for i in 0..n_vel {
            let (cols, _) = k.row(i);
            for &j in cols {
                k_positions.push(if is_dirichlet[i] || is_dirichlet[j] {
                    None
                } else {
                    matrix.position(i, j)
                });
            }
        }
        Ok(SaddleOperator {
            matrix,
            n_vel,
            n_pres,
            is_dirichlet: is_dirichlet.to_vec(),
            k_positions,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn n_pres(&self) -> usize {
        self.n_pres
    }

    pub fn dim(&self) -> usize {
        self.n_vel + self.n_pres + 1
    }

    /// Replaces the velocity block by a new `K` with the construction pattern.
    pub fn update_velocity_block(&mut self, k: &SparseMatrix) {
        assert_eq!(k.nnz(), self.k_positions.len(), "velocity block pattern changed");
        let values = self.matrix.values_mut();
        for (pos, &v) in self.k_positions.iter().zip(k.values()) {
            if let Some(p) = *pos {
                values[p] = v;
            }
        }
    }

    /// Right-hand side for momentum data `f` and continuity data `g`;
    /// constrained velocity entries are zeroed.
    pub fn rhs(&self, f: &[f64], g: Option<&[f64]>) -> Vec<f64> {
        assert_eq!(f.len(), self.n_vel);
        let mut r = vec![0.0; self.dim()];
        for i in 0..self.n_vel {
            if !self.is_dirichlet[i] {
                r[i] = f[i];
            }
        }
        if let Some(g) = g {
            r[self.n_vel..self.n_vel + self.n_pres].copy_from_slice(g);
        }
        r
    }

    /// Splits a solution into velocity, pressure and the mean multiplier.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], f64) {
        let (u, rest) = x.split_at(self.n_vel);
        let (p, lam) = rest.split_at(self.n_pres);
        (u, p, lam[0])
    }
}
