//! Sparse LU with partial pivoting, backed by faer.
//!
//! A CSR matrix is the CSC storage of its transpose, so the arrays are handed
//! to faer without copying and systems are solved with the transposed
//! factors.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};

use crate::assembly::SparseMatrix;
use crate::error::{Error, Result};

/// Fill-reducing ordering and elimination structure of a sparsity pattern.
/// Reusable for every matrix with the same pattern.
#[derive(Clone, Debug)]
pub struct SymbolicFactorization {
    inner: SymbolicLu<usize>,
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Factorization {
    lu: Lu<usize, f64>,
    n: usize,
}

fn check_square(a: &SparseMatrix) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            context: "LU factorization (square matrix)",
            expected: a.n_rows(),
            got: a.n_cols(),
        });
    }
    Ok(())
}

fn transposed_view(a: &SparseMatrix) -> SymbolicSparseColMatRef<'_, usize> {
    SymbolicSparseColMatRef::new_checked(a.n_rows(), a.n_cols(), a.row_ptr(), None, a.col_idx())
}

fn map_lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular { index } => Error::SingularPivot { index },
        LuError::Generic(g) => Error::Solver(format!("{g:?}")),
    }
}

impl SymbolicFactorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        check_square(a)?;
        let inner = SymbolicLu::try_new(transposed_view(a)).map_err(|e| Error::Solver(format!("{e:?}")))?;
        Ok(SymbolicFactorization {
            inner,
            n: a.n_rows(),
            row_ptr: a.row_ptr().to_vec(),
            col_idx: a.col_idx().to_vec(),
        })
    }

    /// Numeric factorization of a matrix with the analyzed pattern.
    pub fn factorize(&self, a: &SparseMatrix) -> Result<Factorization> {
        if a.n_rows() != self.n || a.row_ptr() != self.row_ptr || a.col_idx() != self.col_idx {
            return Err(Error::InvalidArgument(
                "matrix pattern differs from the analyzed pattern".into(),
            ));
        }
        let mat = SparseColMatRef::new(transposed_view(a), a.values());
        let lu = Lu::try_new_with_symbolic(self.inner.clone(), mat).map_err(map_lu_error)?;
        let f = Factorization { lu, n: self.n };
        f.probe(a)?;
        Ok(f)
    }
}

/// Analyzes and factorizes `a` in one go.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization> {
    SymbolicFactorization::new(a)?.factorize(a)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n, "right-hand side length");
        let rhs = MatMut::from_column_major_slice_mut(x, self.n, 1);
        self.lu.solve_transpose_in_place_with_conj(Conj::No, rhs);
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "right-hand side",
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularPivot { index });
        }
        Ok(x)
    }

    /// Zero pivots surface as non-finite values or a failed residual check
    /// on a system with known solution.
    fn probe(&self, a: &SparseMatrix) -> Result<()> {
        if self.n == 0 {
            return Ok(());
        }
        let exact: Vec<f64> = (0..self.n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
        let b = a.mul_vec(&exact);
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularPivot { index });
        }
        let r = a.mul_vec(&x);
        let (mut worst, mut index) = (0.0, 0);
        for (i, (ri, bi)) in r.iter().zip(&b).enumerate() {
            let d = (ri - bi).abs();
            if d > worst {
                worst = d;
                index = i;
            }
        }
        let scale = a.norm1() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(worst <= 1e-6 * scale) {
            return Err(Error::SingularPivot { index });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm_inf(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn random_system(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen::<f64>()));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_solve_is_exact() {
        let f = factorize(&SparseMatrix::identity(5)).unwrap();
        let b = [1.0, -2.0, 3.5, 0.0, 1e-3];
        assert_eq!(f.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn two_by_two() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let x = factorize(&a).unwrap().solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonsymmetric_needs_pivoting() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 2, 3.0), (2, 0, 1.0)])
            .unwrap();
        let x_exact = [1.0, 2.0, 3.0];
        let b = a.mul_vec(&x_exact);
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_exact[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_contract_on_random_systems() {
        for seed in 0..5 {
            let a = random_system(300, seed);
            let f = factorize(&a).unwrap();
            let b: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
            let x = f.solve(&b).unwrap();
            let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, b)| ax - b).collect();
            assert!(norm_inf(&r) <= 1e-10 * (a.norm1() * norm_inf(&x) + norm_inf(&b)));
        }
    }

    #[test]
    fn symbolic_reuse() {
        let a = random_system(50, 1);
        let sym = SymbolicFactorization::new(&a).unwrap();
        let mut a2 = a.clone();
        a2.scale(2.0);
        let b = vec![1.0; 50];
        let x1 = sym.factorize(&a).unwrap().solve(&b).unwrap();
        let x2 = sym.factorize(&a2).unwrap().solve(&b).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - 2.0 * v).abs() < 1e-12);
        }
        assert!(sym.factorize(&SparseMatrix::identity(50)).is_err());
    }

    #[test]
    fn singular_matrices_report_a_pivot() {
        let numerically = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(factorize(&numerically), Err(Error::SingularPivot { .. })));
        let structurally = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]).unwrap();
        assert!(matches!(factorize(&structurally), Err(Error::SingularPivot { .. })));
    }

    #[test]
    fn solve_is_linear() {
        let a = random_system(80, 9);
        let f = factorize(&a).unwrap();
        let b1: Vec<f64> = (0..80).map(|i| (i as f64 * 0.3).cos()).collect();
        let b2: Vec<f64> = (0..80).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let combo: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| 2.5 * x + y).collect();
        let (x1, x2, xc) = (f.solve(&b1).unwrap(), f.solve(&b2).unwrap(), f.solve(&combo).unwrap());
        let scale = norm_inf(&xc);
        for i in 0..80 {
            assert!((xc[i] - (2.5 * x1[i] + x2[i])).abs() <= 1e-12 * scale);
        }
    }
}
