//! Discrete norms, dual norms and the stability constants of a mixed space.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{apply_dirichlet, SaddleOperator};
use crate::assembly::{assemble_gram, assemble_load, AssembledSystem, GramForm, SpaceKind, SparseMatrix};
use crate::elements::FeSpace;
use crate::error::{Error, Result};
use crate::sparse_linalg::{factorize, nullspace_basis, sym_generalized_eigs, DenseMatrix, Factorization, Which};
use crate::verification::manufactured::{ManufacturedSolution, SolutionKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    H1Semi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeNorm {
    L2,
    Max,
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { context, expected, got });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_norm(g: &SparseMatrix, x: &[f64]) -> f64 {
    g.bilinear(x, x).max(0.0).sqrt()
}

/// `√(xᵀGx)` with the Gram matrix of the requested norm.
pub fn norm(sys: &AssembledSystem, coeffs: &[f64], kind: NormKind, which: SpaceKind) -> Result<f64> {
    let space = sys.space();
    match which {
        SpaceKind::Velocity => {
            check_len("velocity coefficients", space.n_vel_dofs(), coeffs.len())?;
            Ok(match kind {
                NormKind::L2 => gram_norm(&sys.m_vel, coeffs),
                NormKind::H1Semi => gram_norm(&sys.a_visc, coeffs),
            })
        }
        SpaceKind::Pressure => {
            check_len("pressure coefficients", space.n_pres_dofs(), coeffs.len())?;
            Ok(match kind {
                NormKind::L2 => gram_norm(&sys.m_pres, coeffs),
                NormKind::H1Semi => {
                    let k = assemble_gram(space, sys.quadrature(), GramForm::Stiffness, SpaceKind::Pressure);
                    gram_norm(&k, coeffs)
                }
            })
        }
    }
}

/// `(Δt Σ ‖vⁿ‖²)^{1/2}` or `max ‖vⁿ‖` over the whole series.
pub fn triple_bar(series: &[f64], dt: f64, p: TimeNorm) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("time-norm of an empty series".into()));
    }
    Ok(match p {
        TimeNorm::L2 => (dt * series.iter().map(|v| v * v).sum::<f64>()).sqrt(),
        TimeNorm::Max => series.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

fn dirichlet_mask(space: &FeSpace) -> Vec<bool> {
    (0..space.n_vel_dofs()).map(|i| space.is_dirichlet(i)).collect()
}

/// Factorized operators behind the discrete dual norms
///
/// ```text
/// ‖w‖_{X_h*} = sup_{v ∈ X_h} (w, v)/‖∇v‖,   ‖w‖_{V_h*} = same sup over V_h.
/// ```
///
/// Functionals are passed as their pairings with the velocity basis;
/// entries on Dirichlet dofs are ignored.
#[derive(Clone, Debug)]
pub struct DualNormContext {
    space: Arc<FeSpace>,
    stiffness: SparseMatrix,
    stiffness_lu: Factorization,
    saddle: SaddleOperator,
    /// `None` when the pair admits spurious pressure modes.
    saddle_lu: Option<Factorization>,
}

impl DualNormContext {
    pub fn new(sys: &AssembledSystem) -> Result<Self> {
        let space = sys.space().clone();
        let mask = dirichlet_mask(&space);
        let stiffness = apply_dirichlet(&sys.a_visc, &mask);
        let stiffness_lu = factorize(&stiffness)?;
        let saddle = SaddleOperator::new(&sys.a_visc, &sys.b_div, &sys.mean_vec, &mask)?;
        let saddle_lu = match factorize(saddle.matrix()) {
            Ok(lu) => Some(lu),
            Err(Error::SingularPivot { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(DualNormContext {
            space,
            stiffness,
            stiffness_lu,
            saddle,
            saddle_lu,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    /// Stiffness with Dirichlet rows and columns replaced by the identity.
    pub fn constrained_stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    fn constrain(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("dual-norm functional", self.space.n_vel_dofs(), w.len())?;
        let mut c = w.to_vec();
        for &i in self.space.dirichlet_dofs() {
            c[i] = 0.0;
        }
        Ok(c)
    }

    /// Solves `A_c z = w` on the free dofs.
    pub fn solve_stiffness(&self, w: &[f64]) -> Result<Vec<f64>> {
        let c = self.constrain(w)?;
        self.stiffness_lu.solve(&c)
    }

    /// Riesz representer of `w` in `X_h` for the `‖∇·‖` inner product.
    pub fn riesz_xh(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.solve_stiffness(w)
    }

    pub fn dual_norm_xh(&self, w: &[f64]) -> Result<f64> {
        let c = self.constrain(w)?;
        let z = self.stiffness_lu.solve(&c)?;
        Ok(dot(&c, &z).max(0.0).sqrt())
    }

    /// Riesz representer of `w` in `V_h`, from `A z − Bᵀμ = w`, `B z = 0`.
    pub fn riesz_vh(&self, w: &[f64]) -> Result<Vec<f64>> {
        let c = self.constrain(w)?;
        let lu = self.saddle_lu.as_ref().ok_or_else(|| {
            Error::Solver("stiffness saddle system is singular; the pair is not inf-sup stable".into())
        })?;
        let x = lu.solve(&self.saddle.rhs(&c, None))?;
        Ok(self.saddle.split(&x).0.to_vec())
    }

    pub fn dual_norm_vh(&self, w: &[f64]) -> Result<f64> {
        let c = self.constrain(w)?;
        let z = self.riesz_vh(w)?;
        Ok(dot(&c, &z).max(0.0).sqrt())
    }
}

/// Smallest nonzero eigenpair of the pressure Schur complement pencil.
#[derive(Clone, Debug)]
pub struct InfSup {
    pub alpha: f64,
    /// Non-constant pressure modes with vanishing eigenvalue (spurious
    /// modes of an unstable pair).
    pub null_modes: usize,
    /// `M_p`-normalized minimizing pressure.
    pub minimizer: Vec<f64>,
    /// `‖Bᵀq‖_{X_h*} / ‖q‖` for the minimizer, via a sparse solve.
    pub certificate: f64,
    /// Smallest eigenvalues of the pencil on zero-mean pressures, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Eigenvalue attached to constant pressures by the rank-one shift.
const CONSTANT_SHIFT: f64 = 2.0;
const NULL_MODE_TOL: f64 = 1e-10;
const INITIAL_EIGENPAIRS: usize = 16;

/// `α = √λ` for the smallest nonzero `λ` of `(B A⁻¹ Bᵀ) q = λ M_p q` on
/// zero-mean pressures.
pub fn inf_sup_constant(sys: &AssembledSystem, ctx: &DualNormContext) -> Result<InfSup> {
    let np = sys.space().n_pres_dofs();
    let nv = sys.space().n_vel_dofs();
    let mut s = DenseMatrix::zeros(np, np);
    let mut col = vec![0.0; nv];
    for j in 0..np {
        // Column j of Bᵀ is row j of B.
        col.iter_mut().for_each(|c| *c = 0.0);
        let (cols, vals) = sys.b_div.row(j);
        for (&i, &v) in cols.iter().zip(vals) {
            col[i] = v;
        }
        let x = ctx.solve_stiffness(&col)?;
        sys.b_div.mul_vec_into(&x, s.col_mut(j));
    }
    s.symmetrize();
    let mp = DenseMatrix::from_sparse(&sys.m_pres);
    let m1 = sys.m_pres.mul_vec(&vec![1.0; np]);
    let area: f64 = m1.iter().sum();
    for j in 0..np {
        for i in 0..np {
            s[(i, j)] += CONSTANT_SHIFT * m1[i] * m1[j] / area;
        }
    }
    // A handful of eigenpairs suffices unless the pair has many spurious
    // modes; then the full spectrum is computed.
    let mut k = np.min(INITIAL_EIGENPAIRS);
    let (eig, null_modes) = loop {
        let eig = sym_generalized_eigs(&s, &mp, k, Which::Smallest)?;
        let scale = eig.eigenvalues.iter().fold(CONSTANT_SHIFT, |m, v| m.max(v.abs()));
        let null_modes = eig.eigenvalues.iter().filter(|&&l| l <= NULL_MODE_TOL * scale).count();
        if null_modes < k {
            break (eig, null_modes);
        }
        if k == np {
            return Err(Error::NoConvergence("pressure pencil has no positive eigenvalue".into()));
        }
        k = np;
    };
    let lambda = eig.eigenvalues[null_modes];
    let minimizer = eig.eigenvectors.col(null_modes).to_vec();
    let q_norm = gram_norm(&sys.m_pres, &minimizer);
    let certificate = ctx.dual_norm_xh(&sys.b_div.tr_mul_vec(&minimizer))? / q_norm;
    let mut eigenvalues = eig.eigenvalues.clone();
    if let Some(shifted) = eigenvalues.iter().position(|l| (l - CONSTANT_SHIFT).abs() <= 1e-8) {
        eigenvalues.remove(shifted);
    }
    Ok(InfSup {
        alpha: lambda.max(0.0).sqrt(),
        null_modes,
        minimizer,
        certificate,
        eigenvalues,
    })
}

/// Explicit basis of `V_h` on the free velocity dofs.
#[derive(Clone, Debug)]
pub struct DivergenceFreeBasis {
    /// One column per basis field, rows indexed by free dofs.
    pub basis: DenseMatrix,
    pub rank_b: usize,
}

impl DivergenceFreeBasis {
    pub fn new(sys: &AssembledSystem) -> Result<Self> {
        let space = sys.space();
        let rows: Vec<usize> = (0..space.n_pres_dofs()).collect();
        let b_free = sys.b_div.select(&rows, space.free_dofs());
        let (rank_b, basis) = nullspace_basis(&b_free)?;
        Ok(DivergenceFreeBasis { basis, rank_b })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Full velocity coefficients of `Z c`.
    pub fn field(&self, space: &FeSpace, c: &[f64]) -> Vec<f64> {
        space.extend(&self.basis.mul_vec(c))
    }
}

#[derive(Clone, Debug)]
pub struct Equivalence {
    pub c_star: f64,
    pub dim_vh: usize,
    /// Velocity coefficients of a minimizing `w ∈ V_h`.
    pub minimizer: Vec<f64>,
}

/// `C_* = min_{w ∈ V_h} ‖w‖_{V_h*} / ‖w‖_{X_h*}` with `w` acting through the
/// L² pairing, from the smallest eigenvalue of the reduced pencil.
pub fn equivalence_constant(sys: &AssembledSystem) -> Result<Equivalence> {
    let space = sys.space();
    let vh = DivergenceFreeBasis::new(sys)?;
    let z = &vh.basis;
    let d = vh.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("the discretely divergence-free space is trivial".into()));
    }
    let free = space.free_dofs();
    let a = sys.a_visc.select(free, free);
    let m = sys.m_vel.select(free, free);
    let mz = DenseMatrix::sparse_mul(&m, z);
    let az = DenseMatrix::sparse_mul(&a, z);
    let a_lu = factorize(&a)?;
    let mut y = mz.clone();
    for j in 0..d {
        a_lu.solve_in_place(y.col_mut(j));
    }
    // ‖w‖²_{X_h*} = cᵀ (ZᵀM A⁻¹ M Z) c and ‖w‖²_{V_h*} = cᵀ G_M G_A⁻¹ G_M c.
    let mut q = mz.tr_matmul(&y);
    q.symmetrize();
    let mut ga = z.tr_matmul(&az);
    ga.symmetrize();
    let gm = z.tr_matmul(&mz);
    let l = ga.cholesky()?;
    let mut x = gm;
    for j in 0..d {
        l.solve_lower_in_place(x.col_mut(j));
    }
    let mut p = x.tr_matmul(&x);
    p.symmetrize();
    let scale = 1.0 / q.max_abs();
    let (mut p, mut q) = (p, q);
    p.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    q.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    let eig = sym_generalized_eigs(&p, &q, 1, Which::Smallest)?;
    let c_star = eig.eigenvalues[0].max(0.0).sqrt();
    let minimizer = vh.field(space, eig.eigenvectors.col(0));
    Ok(Equivalence {
        c_star,
        dim_vh: d,
        minimizer,
    })
}

/// Largest sampled `|b(u, v, w)| / (‖∇u‖‖∇v‖‖∇w‖)` over random discrete
/// fields vanishing on the boundary: a lower bound for the trilinear
/// constant.
pub fn c1_sample(sys: &AssembledSystem, samples: usize, seed: u64) -> Result<f64> {
    let space = sys.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.n_vel_dofs();
    let random_field = |rng: &mut ChaCha8Rng| {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for &i in space.dirichlet_dofs() {
            x[i] = 0.0;
        }
        x
    };
    let mut best = 0.0f64;
    for _ in 0..samples {
        let u = random_field(&mut rng);
        let v = random_field(&mut rng);
        let w = random_field(&mut rng);
        let b = sys.convection(&u)?.bilinear(&w, &v);
        let denom = gram_norm(&sys.a_visc, &u) * gram_norm(&sys.a_visc, &v) * gram_norm(&sys.a_visc, &w);
        if denom > 0.0 {
            best = best.max(b.abs() / denom);
        }
    }
    Ok(best)
}

/// L²-orthogonal projection onto `V_h`.
#[derive(Clone, Debug)]
pub struct L2Projector {
    space: Arc<FeSpace>,
    saddle: SaddleOperator,
    lu: Factorization,
}

impl L2Projector {
    pub fn new(sys: &AssembledSystem) -> Result<Self> {
        let space = sys.space().clone();
        let saddle = SaddleOperator::new(&sys.m_vel, &sys.b_div, &sys.mean_vec, &dirichlet_mask(&space))?;
        let lu = factorize(saddle.matrix())?;
        Ok(L2Projector { space, saddle, lu })
    }

    /// Projection of the functional with pairings `g[i] = (u, φ_i)`.
    pub fn project_pairing(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len("projection data", self.space.n_vel_dofs(), g.len())?;
        let x = self.lu.solve(&self.saddle.rhs(g, None))?;
        Ok(self.saddle.split(&x).0.to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub coeffs: Vec<f64>,
    /// `‖∇Pu‖`.
    pub grad_norm: f64,
    /// `‖∇u‖` by degree-8 quadrature of the exact gradient.
    pub exact_grad_norm: f64,
    pub ratio: f64,
}

/// Degree of the rule used for exact-field integrals.
pub const EXACT_QUADRATURE_DEGREE: usize = 8;

/// `∫ |∇u|²` over the mesh of `space` for a closed-form gradient.
pub fn exact_grad_norm(space: &FeSpace, grad: impl Fn([f64; 2]) -> [[f64; 2]; 2]) -> Result<f64> {
    let rule = crate::elements::quadrature_rule(EXACT_QUADRATURE_DEGREE)?;
    let mut acc = 0.0;
    for t in 0..space.n_cells() {
        let geo = space.geometry(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let g = grad(geo.point(*p));
            acc += w * geo.det * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2));
        }
    }
    Ok(acc.sqrt())
}

/// `Pu` for a closed-form `u` and the stability ratio `‖∇Pu‖ / ‖∇u‖`.
pub fn l2_project_vh(
    sys: &AssembledSystem,
    u: impl Fn([f64; 2]) -> [f64; 2],
    grad_u: impl Fn([f64; 2]) -> [[f64; 2]; 2],
) -> Result<Projection> {
    let space = sys.space();
    let quad = space.quadrature(EXACT_QUADRATURE_DEGREE)?;
    let g = assemble_load(space, &quad, |x, _| u(x), 0.0);
    let coeffs = L2Projector::new(sys)?.project_pairing(&g)?;
    let grad_norm = gram_norm(&sys.a_visc, &coeffs);
    let exact = exact_grad_norm(space, grad_u)?;
    Ok(Projection {
        ratio: grad_norm / exact,
        coeffs,
        grad_norm,
        exact_grad_norm: exact,
    })
}

/// `curl(x²(1−x)²y²(1−y)²)`: divergence free and zero on the boundary.
pub fn probe_field() -> ManufacturedSolution {
    ManufacturedSolution {
        kind: SolutionKind::StreamVortex,
        nu: 1.0,
    }
}

pub fn probe_projection(sys: &AssembledSystem) -> Result<Projection> {
    let probe = probe_field();
    l2_project_vh(sys, |x| probe.velocity(x, 0.0), |x| probe.velocity_gradient(x, 0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    /// Cells per side of the structured mesh.
    pub level: usize,
    pub h_max: f64,
    pub alpha: f64,
    /// `None` when the reduced problem exceeds the dense cap.
    pub c_star: Option<f64>,
    pub c1_sample: f64,
    pub projection_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstantsOptions {
    pub equivalence: bool,
    pub projection: bool,
    pub c1_samples: usize,
    pub seed: u64,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        ConstantsOptions {
            equivalence: true,
            projection: true,
            c1_samples: 32,
            seed: 0,
        }
    }
}

/// Evaluates the constants of `sys`. Dense-cap overflows leave the
/// corresponding entry empty; other failures propagate.
pub fn constants_report(
    sys: &AssembledSystem,
    ctx: &DualNormContext,
    level: usize,
    opts: ConstantsOptions,
) -> Result<ConstantsReport> {
    let alpha = inf_sup_constant(sys, ctx)?.alpha;
    let within_cap = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DenseCapExceeded { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let c_star = if opts.equivalence {
        within_cap(equivalence_constant(sys).map(|e| e.c_star))?
    } else {
        None
    };
    let projection_ratio = if opts.projection {
        Some(probe_projection(sys)?.ratio)
    } else {
        None
    };
    Ok(ConstantsReport {
        level,
        h_max: sys.space().mesh().h_max(),
        alpha,
        c_star,
        c1_sample: c1_sample(sys, opts.c1_samples, opts.seed)?,
        projection_ratio,
    })
}
