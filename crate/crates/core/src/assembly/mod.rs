//! Discrete operators of the mixed Navier-Stokes weak form.
//!
//! Velocity operators act on component-blocked coefficient vectors (see
//! [`FeSpace`]) and are block diagonal with two copies of a scalar operator.
//! Mass, stiffness and convection share one sparsity pattern, so they can be
//! combined entrywise without pattern merges.

mod constraints;
mod sparse;

pub use constraints::{apply_dirichlet, SaddleOperator};
pub use sparse::SparseMatrix;

use std::sync::Arc;

use crate::elements::{FeSpace, SpaceQuadrature};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramForm {
    Mass,
    Stiffness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    Velocity,
    Pressure,
}

/// Sparsity pattern of a scalar operator together with the storage position
/// of every local (test, trial) pair of every cell.
#[derive(Clone, Debug)]
struct ScalarPattern {
    matrix: SparseMatrix,
    stride: usize,
    cell_map: Vec<usize>,
}

fn cell_dofs(space: &FeSpace, kind: SpaceKind, t: usize) -> &[usize] {
    match kind {
        SpaceKind::Velocity => space.velocity_cell_dofs(t),
        SpaceKind::Pressure => &space.mesh().triangles()[t],
    }
}

fn scalar_size(space: &FeSpace, kind: SpaceKind) -> usize {
    match kind {
        SpaceKind::Velocity => space.n_scalar(),
        SpaceKind::Pressure => space.n_pres_dofs(),
    }
}

impl ScalarPattern {
    fn new(space: &FeSpace, kind: SpaceKind) -> Self {
        let n = scalar_size(space, kind);
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in 0..space.n_cells() {
            let dofs = cell_dofs(space, kind, t);
            for &i in dofs {
                rows[i].extend_from_slice(dofs);
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        let matrix = SparseMatrix::from_csr(n, n, row_ptr, col_idx, vec![0.0; nnz])
            .expect("pattern built from sorted rows");
        let stride = cell_dofs(space, kind, 0).len();
        let mut cell_map = Vec::with_capacity(space.n_cells() * stride * stride);
        for t in 0..space.n_cells() {
            let dofs = cell_dofs(space, kind, t);
            for &i in dofs {
                for &j in dofs {
                    cell_map.push(matrix.position(i, j).unwrap());
                }
            }
        }
        ScalarPattern {
            matrix,
            stride,
            cell_map,
        }
    }

    /// Assembles values by visiting cells in `order`; `local(t, out)` fills
    /// the row-major (test, trial) element matrix of cell `t`.
    fn assemble(&self, order: impl Iterator<Item = usize>, mut local: impl FnMut(usize, &mut [f64])) -> SparseMatrix {
        let s2 = self.stride * self.stride;
        let mut values = vec![0.0; self.matrix.nnz()];
        let mut elem = vec![0.0; s2];
        for t in order {
            elem.iter_mut().for_each(|v| *v = 0.0);
            local(t, &mut elem);
            for (k, &pos) in self.cell_map[t * s2..(t + 1) * s2].iter().enumerate() {
                values[pos] += elem[k];
            }
        }
        self.matrix.with_values(values)
    }
}

/// Two copies of a scalar operator on the diagonal, matching the
/// component-blocked velocity layout.
pub fn block_diag2(s: &SparseMatrix) -> SparseMatrix {
    let (n, m) = (s.n_rows(), s.n_cols());
    let mut row_ptr = Vec::with_capacity(2 * n + 1);
    let mut col_idx = Vec::with_capacity(2 * s.nnz());
    let mut values = Vec::with_capacity(2 * s.nnz());
    row_ptr.push(0);
    for block in 0..2 {
        for i in 0..n {
            let (cols, vals) = s.row(i);
            col_idx.extend(cols.iter().map(|j| j + block * m));
            values.extend_from_slice(vals);
            row_ptr.push(col_idx.len());
        }
    }
    SparseMatrix::from_csr(2 * n, 2 * m, row_ptr, col_idx, values).expect("block copy of a valid matrix")
}

fn tabulated(quad: &SpaceQuadrature, kind: SpaceKind, q: usize) -> (&[f64], &[[f64; 2]]) {
    match kind {
        SpaceKind::Velocity => (quad.velocity_values(q), quad.velocity_ref_grads(q)),
        SpaceKind::Pressure => (quad.pressure_values(q), quad.pressure_ref_grads(q)),
    }
}

fn gram_local(space: &FeSpace, quad: &SpaceQuadrature, form: GramForm, kind: SpaceKind, t: usize, out: &mut [f64]) {
    let geo = space.geometry(t);
    let n = cell_dofs(space, kind, t).len();
    let mut grads = vec![[0.0; 2]; n];
    for q in 0..quad.len() {
        let w = quad.rule.weights[q] * geo.det;
        let (vals, rg) = tabulated(quad, kind, q);
        match form {
            GramForm::Mass => {
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] += w * vals[i] * vals[j];
                    }
                }
            }
            GramForm::Stiffness => {
                for (g, r) in grads.iter_mut().zip(rg) {
                    *g = geo.physical_gradient(*r);
                }
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                    }
                }
            }
        }
    }
}

fn assemble_scalar_gram(
    space: &FeSpace,
    quad: &SpaceQuadrature,
    form: GramForm,
    kind: SpaceKind,
    order: impl Iterator<Item = usize>,
) -> SparseMatrix {
    ScalarPattern::new(space, kind).assemble(order, |t, out| gram_local(space, quad, form, kind, t, out))
}

/// Mass or stiffness matrix of the velocity (vector) or pressure (scalar)
/// space.
pub fn assemble_gram(space: &FeSpace, quad: &SpaceQuadrature, form: GramForm, kind: SpaceKind) -> SparseMatrix {
    let s = assemble_scalar_gram(space, quad, form, kind, 0..space.n_cells());
    match kind {
        SpaceKind::Velocity => block_diag2(&s),
        SpaceKind::Pressure => s,
    }
}

/// `B[i][j] = ∫ q_i ∇·φ_j`, of size pressure dofs × velocity dofs.
pub fn assemble_divergence(space: &FeSpace, quad: &SpaceQuadrature) -> SparseMatrix {
    let ns = space.n_scalar();
    let mut triplets = Vec::new();
    let mut local = Vec::new();
    for t in 0..space.n_cells() {
        let geo = space.geometry(t);
        let vdofs = space.velocity_cell_dofs(t);
        let pdofs = space.pressure_cell_dofs(t);
        local.clear();
        local.resize(3 * 2 * vdofs.len(), 0.0);
        for q in 0..quad.len() {
            let w = quad.rule.weights[q] * geo.det;
            let pv = quad.pressure_values(q);
            for (a, r) in quad.velocity_ref_grads(q).iter().enumerate() {
                let g = geo.physical_gradient(*r);
                for (i, &qi) in pv.iter().enumerate() {
                    for c in 0..2 {
                        local[(i * 2 + c) * vdofs.len() + a] += w * qi * g[c];
                    }
                }
            }
        }
        for (i, &pi) in pdofs.iter().enumerate() {
            for c in 0..2 {
                for (a, &s) in vdofs.iter().enumerate() {
                    triplets.push((pi, c * ns + s, local[(i * 2 + c) * vdofs.len() + a]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(space.n_pres_dofs(), space.n_vel_dofs(), &triplets).expect("indices come from dof maps")
}

/// Entries `(1, q_i)` of the pressure basis.
pub fn assemble_mean(space: &FeSpace, quad: &SpaceQuadrature) -> Vec<f64> {
    let mut m = vec![0.0; space.n_pres_dofs()];
    for t in 0..space.n_cells() {
        let det = space.geometry(t).det;
        for q in 0..quad.len() {
            let w = quad.rule.weights[q] * det;
            for (&i, v) in space.pressure_cell_dofs(t).iter().zip(quad.pressure_values(q)) {
                m[i] += w * v;
            }
        }
    }
    m
}

/// `F[i] = ∫ f(x, t)·φ_i`.
pub fn assemble_load(
    space: &FeSpace,
    quad: &SpaceQuadrature,
    f: impl Fn([f64; 2], f64) -> [f64; 2],
    time: f64,
) -> Vec<f64> {
    let ns = space.n_scalar();
    let mut load = vec![0.0; space.n_vel_dofs()];
    for t in 0..space.n_cells() {
        let geo = space.geometry(t);
        let dofs = space.velocity_cell_dofs(t);
        for q in 0..quad.len() {
            let w = quad.rule.weights[q] * geo.det;
            let fx = f(geo.point(quad.rule.points[q]), time);
            for (&s, v) in dofs.iter().zip(quad.velocity_values(q)) {
                load[s] += w * fx[0] * v;
                load[ns + s] += w * fx[1] * v;
            }
        }
    }
    load
}

fn convection_local(space: &FeSpace, quad: &SpaceQuadrature, w: &[f64], t: usize, out: &mut [f64]) {
    let ns = space.n_scalar();
    let geo = space.geometry(t);
    let dofs = space.velocity_cell_dofs(t);
    let n = dofs.len();
    let mut adv = vec![0.0; n];
    for q in 0..quad.len() {
        let wq = quad.rule.weights[q] * geo.det;
        let vals = quad.velocity_values(q);
        let grads = quad.velocity_ref_grads(q);
        let mut wx = [0.0; 2];
        for (a, &s) in dofs.iter().enumerate() {
            wx[0] += w[s] * vals[a];
            wx[1] += w[ns + s] * vals[a];
        }
        for (a, r) in grads.iter().enumerate() {
            let g = geo.physical_gradient(*r);
            adv[a] = wx[0] * g[0] + wx[1] * g[1];
        }
        // Row b is the test function, column a the trial function.
        for b in 0..n {
            for a in 0..n {
                out[b * n + a] += wq * 0.5 * (adv[a] * vals[b] - adv[b] * vals[a]);
            }
        }
    }
}

/// Operators that do not change during a time integration, plus the cached
/// pattern used to assemble the convection matrix at every step.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    space: Arc<FeSpace>,
    quad: SpaceQuadrature,
    velocity_pattern: ScalarPattern,
    /// Velocity stiffness (without the viscosity).
    pub a_visc: SparseMatrix,
    pub m_vel: SparseMatrix,
    /// Pressure dofs × velocity dofs, entries `(q_i, ∇·φ_j)`.
    pub b_div: SparseMatrix,
    pub m_pres: SparseMatrix,
    /// Entries `(1, q_i)`.
    pub mean_vec: Vec<f64>,
}

impl AssembledSystem {
    pub fn new(space: Arc<FeSpace>, quad_degree: usize) -> Result<Self> {
        let quad = space.quadrature(quad_degree)?;
        let velocity_pattern = ScalarPattern::new(&space, SpaceKind::Velocity);
        let cells = 0..space.n_cells();
        let stiff = velocity_pattern.assemble(cells.clone(), |t, out| {
            gram_local(&space, &quad, GramForm::Stiffness, SpaceKind::Velocity, t, out)
        });
        let mass = velocity_pattern.assemble(cells, |t, out| {
            gram_local(&space, &quad, GramForm::Mass, SpaceKind::Velocity, t, out)
        });
        let b_div = assemble_divergence(&space, &quad);
        let m_pres = assemble_gram(&space, &quad, GramForm::Mass, SpaceKind::Pressure);
        let mean_vec = assemble_mean(&space, &quad);
        Ok(AssembledSystem {
            a_visc: block_diag2(&stiff),
            m_vel: block_diag2(&mass),
            b_div,
            m_pres,
            mean_vec,
            space,
            quad,
            velocity_pattern,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn quadrature(&self) -> &SpaceQuadrature {
        &self.quad
    }

    /// `N(w)[i][j] = b(w, φ_j, φ_i)` with the skew-symmetric trilinear form,
    /// on the same pattern as `a_visc` and `m_vel`.
    pub fn convection(&self, w: &[f64]) -> Result<SparseMatrix> {
        if w.len() != self.space.n_vel_dofs() {
            return Err(Error::DimensionMismatch {
                context: "convection field",
                expected: self.space.n_vel_dofs(),
                got: w.len(),
            });
        }
        let s = self
            .velocity_pattern
            .assemble(0..self.space.n_cells(), |t, out| convection_local(&self.space, &self.quad, w, t, out));
        Ok(block_diag2(&s))
    }

    pub fn load(&self, f: impl Fn([f64; 2], f64) -> [f64; 2], t: f64) -> Vec<f64> {
        assemble_load(&self.space, &self.quad, f, t)
    }
}

/// Convection matrix for a single field without caching the pattern.
pub fn assemble_convection(space: &FeSpace, quad: &SpaceQuadrature, w: &[f64]) -> Result<SparseMatrix> {
    if w.len() != space.n_vel_dofs() {
        return Err(Error::DimensionMismatch {
            context: "convection field",
            expected: space.n_vel_dofs(),
            got: w.len(),
        });
    }
    let s = ScalarPattern::new(space, SpaceKind::Velocity)
        .assemble(0..space.n_cells(), |t, out| convection_local(space, quad, w, t, out));
    Ok(block_diag2(&s))
}
