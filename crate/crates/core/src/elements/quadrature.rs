//! Quadrature on the reference triangle {(0,0), (1,0), (0,1)}.
//!
//! Degrees 1, 2 and 5 use the classical centroid, edge-interior three-point
//! and Radon seven-point rules. Higher degrees use a collapsed (Duffy)
//! tensor product of Gauss-Legendre rules, which keeps every weight positive.

use crate::error::{Error, Result};

pub const MAX_QUADRATURE_DEGREE: usize = 8;

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Barycentric coordinates (λ0, λ1, λ2) with λ1 = ξ, λ2 = η.
    pub points: Vec<[f64; 3]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn orbit3(a: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a, b], [a, b, a], [b, a, a]] {
        points.push(p);
        weights.push(w);
    }
}

/// Returns a rule exact for all polynomials of total degree ≤ `degree`.
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let exact_degree = match degree {
        1 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(0.5);
            1
        }
        2 => {
            orbit3(1.0 / 6.0, 1.0 / 6.0, &mut points, &mut weights);
            2
        }
        3..=5 => {
            let s = 15f64.sqrt();
            points.push([1.0 / 3.0; 3]);
            weights.push(9.0 / 80.0);
            orbit3((6.0 - s) / 21.0, (155.0 - s) / 2400.0, &mut points, &mut weights);
            orbit3((6.0 + s) / 21.0, (155.0 + s) / 2400.0, &mut points, &mut weights);
            5
        }
        6..=MAX_QUADRATURE_DEGREE => {
            let m = (degree + 3) / 2;
            let (x, w) = gauss_legendre_unit(m);
            for j in 0..m {
                let v = x[j];
                for i in 0..m {
                    let u = x[i];
                    let xi = u * (1.0 - v);
                    let eta = v;
                    points.push([1.0 - xi - eta, xi, eta]);
                    weights.push(w[i] * w[j] * (1.0 - v));
                }
            }
            2 * m - 2
        }
        d => return Err(Error::UnsupportedQuadrature(d)),
    };
    Ok(QuadratureRule {
        points,
        weights,
        exact_degree,
    })
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub(crate) fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
