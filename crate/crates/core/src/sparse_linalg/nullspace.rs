//! Orthonormal kernel bases via Householder QR with column pivoting.

use super::dense::{dot, norm2, DenseMatrix};
use super::eigen::check_dense_cap;
use crate::assembly::SparseMatrix;
use crate::error::Result;

/// Relative threshold on the pivoted diagonal of `R` below which columns
/// are treated as dependent.
const RANK_TOL: f64 = 1e-9;

/// Numerical rank of `b` and an orthonormal basis of its kernel, one column
/// per kernel direction.
pub fn nullspace_basis(b: &SparseMatrix) -> Result<(usize, DenseMatrix)> {
    let (m, n) = (b.n_rows(), b.n_cols());
    check_dense_cap(n)?;
    // Work on bᵀ (n × m): its range is the row space of b, whose orthogonal
    // complement is the kernel.
    let mut a = DenseMatrix::from_sparse(&b.transpose());
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let steps = n.min(m);
    let mut first = 0.0;
    for k in 0..steps {
        let (mut best, mut best_norm) = (k, -1.0);
        for j in k..m {
            let nj = norm2(&a.col(j)[k..]);
            if nj > best_norm {
                best = j;
                best_norm = nj;
            }
        }
        if k == 0 {
            first = best_norm;
        }
        if best_norm <= RANK_TOL * first || best_norm == 0.0 {
            break;
        }
        if best != k {
            for i in 0..n {
                let t = a[(i, k)];
                a[(i, k)] = a[(i, best)];
                a[(i, best)] = t;
            }
        }
        let x = &a.col(k)[k..];
        let alpha = if x[0] > 0.0 { -best_norm } else { best_norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vn = norm2(&v);
        v.iter_mut().for_each(|c| *c /= vn);
        for j in k..m {
            let col = &mut a.col_mut(j)[k..];
            let c = 2.0 * dot(&v, col);
            col.iter_mut().zip(&v).for_each(|(x, vi)| *x -= c * vi);
        }
        reflectors.push(v);
    }
    let rank = reflectors.len();
    let mut z = DenseMatrix::zeros(n, n - rank);
    for j in 0..n - rank {
        z[(rank + j, j)] = 1.0;
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..n - rank {
            let col = &mut z.col_mut(j)[k..];
            let c = 2.0 * dot(v, col);
            if c != 0.0 {
                col.iter_mut().zip(v).for_each(|(x, vi)| *x -= c * vi);
            }
        }
    }
    Ok((rank, z))
}
