//! Mixed velocity/pressure spaces on a triangulation.
//!
//! Velocity coefficients are stored component-blocked: the global index of
//! scalar dof `s` in component `c` is `c * n_scalar + s`. Scalar dofs are
//! numbered vertices first, then edges (P2) or cells (bubble).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::quadrature::{quadrature_rule, QuadratureRule};
use super::{ElementFamily, Tabulation};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementPair {
    /// P2 velocity, P1 pressure.
    TaylorHood,
    /// P1 plus cubic bubble velocity, P1 pressure.
    Mini,
    /// Equal-order P1/P1. Not inf-sup stable; kept for demonstrations.
    P1P1,
}

impl ElementPair {
    pub fn velocity_family(self) -> ElementFamily {
        match self {
            ElementPair::TaylorHood => ElementFamily::P2,
            ElementPair::Mini => ElementFamily::MiniVelocity,
            ElementPair::P1P1 => ElementFamily::P1,
        }
    }

    pub fn pressure_family(self) -> ElementFamily {
        ElementFamily::P1
    }

    /// Expected order of the velocity H¹ and pressure L² errors.
    pub fn approximation_order(self) -> usize {
        match self {
            ElementPair::TaylorHood => 2,
            ElementPair::Mini | ElementPair::P1P1 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementPair::TaylorHood => "taylor-hood",
            ElementPair::Mini => "mini",
            ElementPair::P1P1 => "p1p1",
        }
    }
}

impl fmt::Display for ElementPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "taylor-hood" | "taylorhood" | "th" | "p2p1" => Ok(ElementPair::TaylorHood),
            "mini" => Ok(ElementPair::Mini),
            "p1p1" => Ok(ElementPair::P1P1),
            other => Err(Error::InvalidArgument(format!(
                "unknown element pair '{other}' (expected taylor-hood, mini or p1p1)"
            ))),
        }
    }
}

/// Affine map data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    pub vertices: [[f64; 2]; 3],
    /// Jacobian determinant, twice the area.
    pub det: f64,
    /// Inverse transpose of the Jacobian; maps reference gradients to
    /// physical ones.
    pub jinv_t: [[f64; 2]; 2],
}

impl CellGeometry {
    fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let jinv_t = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        CellGeometry { vertices, det, jinv_t }
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    #[inline]
    pub fn physical_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jinv_t[0][0] * g[0] + self.jinv_t[0][1] * g[1],
            self.jinv_t[1][0] * g[0] + self.jinv_t[1][1] * g[1],
        ]
    }
}

#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    pair: ElementPair,
    n_scalar: usize,
    vel_stride: usize,
    vel_dofs: Vec<usize>,
    dirichlet: Vec<usize>,
    is_dirichlet: Vec<bool>,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
    geometry: Vec<CellGeometry>,
}

pub fn build_space(mesh: Arc<Mesh>, pair: ElementPair) -> FeSpace {
    let family = pair.velocity_family();
    let nv = mesh.n_vertices();
    let (n_scalar, vel_stride) = match family {
        ElementFamily::P1 => (nv, 3),
        ElementFamily::P2 => (nv + mesh.edges().len(), 6),
        _ => (nv + mesh.n_triangles(), 4),
    };
    let mut vel_dofs = Vec::with_capacity(vel_stride * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        vel_dofs.extend_from_slice(tri);
        match family {
            ElementFamily::P2 => vel_dofs.extend(mesh.triangle_edges()[t].iter().map(|e| nv + e)),
            ElementFamily::MiniVelocity => vel_dofs.push(nv + t),
            _ => {}
        }
    }

    let mut scalar_bc = vec![false; n_scalar];
    for (e, [a, b]) in mesh.edges().iter().enumerate() {
        if mesh.edge_on_boundary(e) {
            scalar_bc[*a] = true;
            scalar_bc[*b] = true;
            if family == ElementFamily::P2 {
                scalar_bc[nv + e] = true;
            }
        }
    }
    let n_vel = 2 * n_scalar;
    let is_dirichlet: Vec<bool> = (0..n_vel).map(|i| scalar_bc[i % n_scalar]).collect();
    let dirichlet: Vec<usize> = (0..n_vel).filter(|&i| is_dirichlet[i]).collect();
    let free: Vec<usize> = (0..n_vel).filter(|&i| !is_dirichlet[i]).collect();
    let mut free_index = vec![None; n_vel];
    for (k, &i) in free.iter().enumerate() {
        free_index[i] = Some(k);
    }
    let geometry = (0..mesh.n_triangles())
        .map(|t| CellGeometry::new(mesh.triangle_coords(t)))
        .collect();

    FeSpace {
        mesh,
        pair,
        n_scalar,
        vel_stride,
        vel_dofs,
        dirichlet,
        is_dirichlet,
        free,
        free_index,
        geometry,
    }
}

impl FeSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn pair(&self) -> ElementPair {
        self.pair
    }

    pub fn velocity_family(&self) -> ElementFamily {
        self.pair.velocity_family()
    }

    pub fn pressure_family(&self) -> ElementFamily {
        self.pair.pressure_family()
    }

    /// Scalar velocity dofs per component.
    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    pub fn n_vel_dofs(&self) -> usize {
        2 * self.n_scalar
    }

    pub fn n_pres_dofs(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_triangles()
    }

    /// Scalar velocity dofs of cell `t` in local basis order.
    pub fn velocity_cell_dofs(&self, t: usize) -> &[usize] {
        &self.vel_dofs[t * self.vel_stride..(t + 1) * self.vel_stride]
    }

    pub fn pressure_cell_dofs(&self, t: usize) -> [usize; 3] {
        self.mesh.triangles()[t]
    }

    pub fn geometry(&self, t: usize) -> &CellGeometry {
        &self.geometry[t]
    }

    /// Sorted global velocity indices (both components) on the boundary.
    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.is_dirichlet[i]
    }

    /// Sorted global velocity indices not constrained by the boundary.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_index(&self, i: usize) -> Option<usize> {
        self.free_index[i]
    }

    /// Restricts a full velocity vector to the free dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Extends a free-dof vector by zeros on the boundary.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_vel_dofs()];
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = reduced[k];
        }
        full
    }

    /// Lagrange interpolant of a vector field at time `t`.
    pub fn interpolate(&self, field: impl Fn([f64; 2], f64) -> [f64; 2], t: f64) -> Vec<f64> {
        let ns = self.n_scalar;
        let nv = self.mesh.n_vertices();
        let mut c = vec![0.0; 2 * ns];
        let mut put = |s: usize, v: [f64; 2]| {
            c[s] = v[0];
            c[ns + s] = v[1];
        };
        let verts = self.mesh.vertices();
        for (i, &x) in verts.iter().enumerate() {
            put(i, field(x, t));
        }
        match self.velocity_family() {
            ElementFamily::P2 => {
                for (e, [a, b]) in self.mesh.edges().iter().enumerate() {
                    let m = [0.5 * (verts[*a][0] + verts[*b][0]), 0.5 * (verts[*a][1] + verts[*b][1])];
                    put(nv + e, field(m, t));
                }
            }
            ElementFamily::MiniVelocity => {
                for (k, tri) in self.mesh.triangles().iter().enumerate() {
                    let g = self.geometry[k].point([1.0 / 3.0; 3]);
                    let u = field(g, t);
                    for comp in 0..2 {
                        let mean = tri.iter().map(|&v| c[comp * ns + v]).sum::<f64>() / 3.0;
                        c[comp * ns + nv + k] = u[comp] - mean;
                    }
                }
            }
            _ => {}
        }
        c
    }

    /// Nodal interpolant of a scalar pressure field at time `t`.
    pub fn interpolate_pressure(&self, field: impl Fn([f64; 2], f64) -> f64, t: f64) -> Vec<f64> {
        self.mesh.vertices().iter().map(|&x| field(x, t)).collect()
    }

    /// Quadrature rule together with basis tables for both families.
    pub fn quadrature(&self, degree: usize) -> Result<SpaceQuadrature> {
        let rule = quadrature_rule(degree)?;
        Ok(SpaceQuadrature {
            vel: Tabulation::new(self.velocity_family(), &rule),
            pres: Tabulation::new(self.pressure_family(), &rule),
            rule,
        })
    }
}

/// A quadrature rule with the velocity and pressure bases tabulated at its
/// points.
#[derive(Clone, Debug)]
pub struct SpaceQuadrature {
    pub rule: QuadratureRule,
    pub(crate) vel: Tabulation,
    pub(crate) pres: Tabulation,
}

impl SpaceQuadrature {
    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    pub fn velocity_values(&self, q: usize) -> &[f64] {
        &self.vel.values[q]
    }

    pub fn velocity_ref_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.vel.ref_grads[q]
    }

    pub fn pressure_values(&self, q: usize) -> &[f64] {
        &self.pres.values[q]
    }

    pub fn pressure_ref_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.pres.ref_grads[q]
    }
}

/// Pointwise values of discrete fields on one cell, reused across quadrature
/// points to avoid allocation.
pub struct CellEvaluator<'a> {
    space: &'a FeSpace,
    quad: &'a SpaceQuadrature,
    grads: Vec<[f64; 2]>,
}

impl<'a> CellEvaluator<'a> {
    pub fn new(space: &'a FeSpace, quad: &'a SpaceQuadrature) -> Self {
        CellEvaluator {
            space,
            quad,
            grads: vec![[0.0; 2]; space.vel_stride],
        }
    }

    /// Physical gradients of the local velocity basis at point `q` of cell `t`.
    pub fn velocity_grads(&mut self, t: usize, q: usize) -> &[[f64; 2]] {
        let geo = &self.space.geometry[t];
        for (g, r) in self.grads.iter_mut().zip(self.quad.velocity_ref_grads(q)) {
            *g = geo.physical_gradient(*r);
        }
        &self.grads
    }

    /// Velocity value and gradient `[[∂x u1, ∂y u1], [∂x u2, ∂y u2]]`.
    pub fn velocity(&mut self, coeffs: &[f64], t: usize, q: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        let ns = self.space.n_scalar;
        let dofs = self.space.velocity_cell_dofs(t);
        let vals = self.quad.velocity_values(q);
        self.velocity_grads(t, q);
        let mut u = [0.0; 2];
        let mut du = [[0.0; 2]; 2];
        for (a, &s) in dofs.iter().enumerate() {
            for c in 0..2 {
                let k = coeffs[c * ns + s];
                u[c] += k * vals[a];
                du[c][0] += k * self.grads[a][0];
                du[c][1] += k * self.grads[a][1];
            }
        }
        (u, du)
    }

    pub fn pressure(&self, coeffs: &[f64], t: usize, q: usize) -> f64 {
        let dofs = self.space.pressure_cell_dofs(t);
        let vals = self.quad.pressure_values(q);
        dofs.iter().zip(vals).map(|(&i, v)| coeffs[i] * v).sum()
    }
}
