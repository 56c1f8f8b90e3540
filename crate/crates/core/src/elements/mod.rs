//! Reference elements, quadrature, and the mixed velocity/pressure spaces.
//!
//! Local numbering on the reference triangle: vertices 0, 1, 2 sit at
//! (0,0), (1,0), (0,1) with barycentric coordinates λ0 = 1 - ξ - η, λ1 = ξ,
//! λ2 = η. Local edge k joins vertices k and k+1 (mod 3).

pub mod quadrature;
pub mod space;

pub use quadrature::{quadrature_rule, QuadratureRule};
pub use space::{build_space, CellEvaluator, CellGeometry, ElementPair, FeSpace, SpaceQuadrature};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementFamily {
    P1,
    P2,
    Bubble,
    /// P1 enriched with the cubic bubble.
    MiniVelocity,
}

const GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

impl ElementFamily {
    /// Highest total polynomial degree present in the local basis.
    pub fn polynomial_degree(self) -> usize {
        match self {
            ElementFamily::P1 => 1,
            ElementFamily::P2 => 2,
            ElementFamily::Bubble | ElementFamily::MiniVelocity => 3,
        }
    }

    pub fn dofs_per_vertex(self) -> usize {
        match self {
            ElementFamily::Bubble => 0,
            _ => 1,
        }
    }

    pub fn dofs_per_edge(self) -> usize {
        match self {
            ElementFamily::P2 => 1,
            _ => 0,
        }
    }

    pub fn dofs_per_cell(self) -> usize {
        match self {
            ElementFamily::Bubble | ElementFamily::MiniVelocity => 1,
            _ => 0,
        }
    }

    /// Number of local scalar basis functions.
    pub fn local_dofs(self) -> usize {
        3 * self.dofs_per_vertex() + 3 * self.dofs_per_edge() + self.dofs_per_cell()
    }

    /// Values and reference gradients at a point given in barycentric
    /// coordinates. Local order: vertices, then edges, then the cell dof.
    pub fn eval(self, bary: [f64; 3]) -> Result<BasisEval> {
        const TOL: f64 = 1e-12;
        if bary.iter().any(|&l| l < -TOL) || (bary.iter().sum::<f64>() - 1.0).abs() > TOL {
            return Err(Error::OutsideReference(bary));
        }
        Ok(self.eval_unchecked(bary))
    }

    pub(crate) fn eval_unchecked(self, l: [f64; 3]) -> BasisEval {
        let g = GRAD_LAMBDA;
        let mut values = Vec::with_capacity(self.local_dofs());
        let mut gradients = Vec::with_capacity(self.local_dofs());
        match self {
            ElementFamily::P1 | ElementFamily::MiniVelocity => {
                values.extend_from_slice(&l);
                gradients.extend_from_slice(&g);
            }
            ElementFamily::P2 => {
                for i in 0..3 {
                    values.push(l[i] * (2.0 * l[i] - 1.0));
                    let s = 4.0 * l[i] - 1.0;
                    gradients.push([s * g[i][0], s * g[i][1]]);
                }
                for k in 0..3 {
                    let (a, b) = (k, (k + 1) % 3);
                    values.push(4.0 * l[a] * l[b]);
                    gradients.push([
                        4.0 * (l[b] * g[a][0] + l[a] * g[b][0]),
                        4.0 * (l[b] * g[a][1] + l[a] * g[b][1]),
                    ]);
                }
            }
            ElementFamily::Bubble => {}
        }
        if matches!(self, ElementFamily::Bubble | ElementFamily::MiniVelocity) {
            values.push(27.0 * l[0] * l[1] * l[2]);
            let c = [l[1] * l[2], l[0] * l[2], l[0] * l[1]];
            gradients.push([
                27.0 * (c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0]),
                27.0 * (c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1]),
            ]);
        }
        BasisEval { values, gradients }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Gradients with respect to the reference coordinates (ξ, η).
    pub gradients: Vec<[f64; 2]>,
}

pub fn reference_basis_eval(family: ElementFamily, bary: [f64; 3]) -> Result<BasisEval> {
    family.eval(bary)
}

/// Basis values and reference gradients of one family at every point of a
/// quadrature rule.
#[derive(Clone, Debug)]
pub(crate) struct Tabulation {
    pub values: Vec<Vec<f64>>,
    pub ref_grads: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    pub fn new(family: ElementFamily, rule: &QuadratureRule) -> Self {
        let evals: Vec<BasisEval> = rule.points.iter().map(|&p| family.eval_unchecked(p)).collect();
        Tabulation {
            values: evals.iter().map(|e| e.values.clone()).collect(),
            ref_grads: evals.into_iter().map(|e| e.gradients).collect(),
        }
    }
}
