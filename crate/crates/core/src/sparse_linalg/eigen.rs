//! Dense symmetric and symmetric-definite generalized eigenproblems.
//!
//! The pencil `(S, M)` is reduced to `L⁻¹ S L⁻ᵀ` with `M = L Lᵀ`, brought to
//! tridiagonal form by Householder reflections, and its eigenvalues found
//! by implicit QL. Requested eigenvectors come from inverse iteration on the
//! tridiagonal matrix and are mapped back through the reflections and `L⁻ᵀ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::{dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_DENSE_CAP: usize = 3000;
/// Environment variable overriding [`DEFAULT_DENSE_CAP`].
pub const DENSE_CAP_ENV: &str = "NSFEM_DENSE_CAP";

pub fn dense_cap() -> usize {
    std::env::var(DENSE_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_CAP)
}

pub fn check_dense_cap(size: usize) -> Result<()> {
    let cap = dense_cap();
    if size > cap {
        return Err(Error::DenseCapExceeded { size, cap });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// One column per eigenvalue, normalized in the `M` inner product.
    pub eigenvectors: DenseMatrix,
    pub problem: String,
}

struct Tridiagonal {
    d: Vec<f64>,
    /// `e[i]` couples rows `i` and `i + 1`.
    e: Vec<f64>,
    /// Householder vector for step `k`, acting on rows `k + 1..`.
    reflectors: Vec<Option<Vec<f64>>>,
}

fn tridiagonalize(mut a: DenseMatrix) -> Tridiagonal {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    for k in 0..n.saturating_sub(2) {
        let x = a.col(k)[k + 1..].to_vec();
        let xnorm = norm2(&x);
        d[k] = a[(k, k)];
        if xnorm == 0.0 {
            e[k] = 0.0;
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] > 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vn = norm2(&v);
        v.iter_mut().for_each(|c| *c /= vn);
        e[k] = alpha;

        let off = k + 1;
        let m = n - off;
        let mut p = vec![0.0; m];
        for j in 0..m {
            let vj = v[j];
            for (pi, aij) in p.iter_mut().zip(&a.col(off + j)[off..]) {
                *pi += aij * vj;
            }
        }
        let kk = dot(&v, &p);
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| 2.0 * pi - 2.0 * kk * vi).collect();
        for j in 0..m {
            let (vj, wj) = (v[j], w[j]);
            let col = &mut a.col_mut(off + j)[off..];
            for i in 0..m {
                col[i] -= v[i] * wj + w[i] * vj;
            }
        }
        reflectors.push(Some(v));
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2, n - 2)];
        e[n - 2] = a[(n - 1, n - 2)];
    }
    if n >= 1 {
        d[n - 1] = a[(n - 1, n - 1)];
    }
    Tridiagonal { d, e, reflectors }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL, ascending.
fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(format!("tridiagonal QL stalled at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}

/// Solves `(T - λI) x = b` by Gaussian elimination with partial pivoting;
/// zero pivots are replaced by `tiny`.
fn shifted_tridiagonal_solve(d: &[f64], e: &[f64], lambda: f64, tiny: f64, b: &mut [f64]) {
    let n = d.len();
    if n == 1 {
        let p = d[0] - lambda;
        b[0] /= if p.abs() < tiny { tiny } else { p };
        return;
    }
    // Row i of U holds u0[i] (diagonal), u1[i], u2[i] (super-diagonals).
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut mult = vec![0.0; n];
    let mut swapped = vec![false; n];
    // Current working row: (a, bb, cc) at columns (i, i+1, i+2).
    let (mut a, mut bb, mut cc) = (d[0] - lambda, e[0], 0.0);
    for i in 0..n - 1 {
        let (sub, diag, sup) = (e[i], d[i + 1] - lambda, if i + 2 < n { e[i + 1] } else { 0.0 });
        if a.abs() >= sub.abs() {
            let piv = if a.abs() < tiny { tiny.copysign(a) } else { a };
            let l = sub / piv;
            mult[i] = l;
            u0[i] = piv;
            u1[i] = bb;
            u2[i] = cc;
            a = diag - l * bb;
            bb = sup - l * cc;
            cc = 0.0;
        } else {
            let l = a / sub;
            mult[i] = l;
            swapped[i] = true;
            u0[i] = sub;
            u1[i] = diag;
            u2[i] = sup;
            a = bb - l * diag;
            bb = cc - l * sup;
            cc = 0.0;
        }
    }
    u0[n - 1] = if a.abs() < tiny { tiny.copysign(a) } else { a };
    for i in 0..n - 1 {
        if swapped[i] {
            b.swap(i, i + 1);
        }
        b[i + 1] -= mult[i] * b[i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * b[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * b[i + 2];
        }
        b[i] = s / u0[i];
    }
}

fn tridiagonal_eigenvectors(d: &[f64], e: &[f64], lambdas: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    let tnorm = (0..n)
        .map(|i| d[i].abs() + if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * tnorm;
    let cluster_tol = 1e-3 * tnorm;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
    let mut shifts: Vec<f64> = Vec::with_capacity(lambdas.len());
    for (idx, &lam) in lambdas.iter().enumerate() {
        // Separate numerically coincident shifts so the iterations differ.
        let mut shift = lam;
        if let Some(&prev) = shifts.last() {
            let gap = 10.0 * f64::EPSILON * lam.abs().max(tnorm);
            if shift - prev < gap {
                shift = prev + gap;
            }
        }
        shifts.push(shift);
        let cluster: Vec<usize> = (0..idx).filter(|&j| (lambdas[j] - lam).abs() <= cluster_tol).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ idx as u64);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..5 {
            shifted_tridiagonal_solve(d, e, shift, tiny, &mut x);
            for &j in &cluster {
                let c = dot(&x, &vectors[j]);
                x.iter_mut().zip(&vectors[j]).for_each(|(xi, vj)| *xi -= c * vj);
            }
            let nx = norm2(&x);
            x.iter_mut().for_each(|v| *v /= nx);
        }
        vectors.push(x);
    }
    vectors
}

fn apply_reflectors(t: &Tridiagonal, y: &mut [f64]) {
    for (k, v) in t.reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            let tail = &mut y[k + 1..];
            let c = 2.0 * dot(v, tail);
            tail.iter_mut().zip(v).for_each(|(yi, vi)| *yi -= c * vi);
        }
    }
}

fn check_square_symmetric(a: &DenseMatrix, what: &'static str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    Ok(())
}

fn select(n: usize, k: usize, which: Which) -> std::ops::Range<usize> {
    let k = k.min(n);
    match which {
        Which::Smallest => 0..k,
        Which::Largest => n - k..n,
    }
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_square_symmetric(a, "symmetric eigenproblem matrix")?;
    check_dense_cap(a.nrows())?;
    let t = tridiagonalize(a.clone());
    tridiagonal_eigenvalues(&t.d, &t.e)
}

/// `k` extreme eigenpairs of a symmetric matrix with orthonormal vectors.
pub fn symmetric_eigs(a: &DenseMatrix, k: usize, which: Which) -> Result<(Vec<f64>, DenseMatrix)> {
    check_square_symmetric(a, "symmetric eigenproblem matrix")?;
    check_dense_cap(a.nrows())?;
    let n = a.nrows();
    let t = tridiagonalize(a.clone());
    let all = tridiagonal_eigenvalues(&t.d, &t.e)?;
    let lambdas = all[select(n, k, which)].to_vec();
    let mut vecs = tridiagonal_eigenvectors(&t.d, &t.e, &lambdas);
    for v in &mut vecs {
        apply_reflectors(&t, v);
    }
    Ok((lambdas, DenseMatrix::from_columns(n, &vecs)))
}

/// `k` extreme eigenpairs of `S x = λ M x` with `S` symmetric and `M`
/// symmetric positive definite.
pub fn sym_generalized_eigs(s: &DenseMatrix, m: &DenseMatrix, k: usize, which: Which) -> Result<EigenResult> {
    check_square_symmetric(s, "pencil matrix S")?;
    check_square_symmetric(m, "pencil matrix M")?;
    let n = s.nrows();
    if m.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "pencil (S, M)",
            expected: n,
            got: m.nrows(),
        });
    }
    check_dense_cap(n)?;
    let l = m.cholesky()?;
    let linv = l.lower_inverse()?;
    let mut c = linv.matmul(s).matmul(&linv.transpose());
    c.symmetrize();
    let (eigenvalues, y) = symmetric_eigs(&c, k, which)?;
    let mut columns = Vec::with_capacity(eigenvalues.len());
    for j in 0..eigenvalues.len() {
        let mut x = y.col(j).to_vec();
        l.solve_lower_transpose_in_place(&mut x);
        columns.push(x);
    }
    let eigenvectors = DenseMatrix::from_columns(n, &columns);
    let result = EigenResult {
        eigenvalues,
        eigenvectors,
        problem: format!("generalized symmetric pencil of size {n}, {k} {which:?} eigenpairs"),
    };
    let worst = max_relative_residual(s, m, &result);
    if worst > 1e-8 {
        return Err(Error::NoConvergence(format!(
            "eigenpair residual {worst:.3e} exceeds the 1e-8 contract"
        )));
    }
    Ok(result)
}

/// Largest `‖S v − λ M v‖ / ‖v‖` over the pairs of `r`, with the residual
/// measured relative to the scale `max(‖S‖, |λ|‖M‖)` of the entries.
pub fn max_relative_residual(s: &DenseMatrix, m: &DenseMatrix, r: &EigenResult) -> f64 {
    let scale = s.max_abs().max(m.max_abs()).max(f64::MIN_POSITIVE);
    (0..r.eigenvalues.len())
        .map(|j| {
            let v = r.eigenvectors.col(j);
            let sv = s.mul_vec(v);
            let mv = m.mul_vec(v);
            let lam = r.eigenvalues[j];
            let res: Vec<f64> = sv.iter().zip(&mv).map(|(a, b)| a - lam * b).collect();
            norm2(&res) / (norm2(v) * scale * (1.0 + lam.abs()))
        })
        .fold(0.0, f64::max)
}
