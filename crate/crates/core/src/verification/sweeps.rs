//! Refinement sweeps of the discrete constants.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load, AssembledSystem};
use crate::elements::{build_space, ElementPair};
use crate::error::{Error, Result};
use crate::mesh::generate_structured_square;
use crate::norms::{
    dot, equivalence_constant, inf_sup_constant, probe_field, probe_projection, DivergenceFreeBasis,
    DualNormContext, EXACT_QUADRATURE_DEGREE,
};

pub fn level_system(n: usize, pair: ElementPair, quad_degree: usize) -> Result<AssembledSystem> {
    let mesh = Arc::new(generate_structured_square(n)?);
    AssembledSystem::new(Arc::new(build_space(mesh, pair)), quad_degree)
}

/// Cells per side of `levels` successive refinements of `base_n`.
pub fn refinement_levels(base_n: usize, levels: usize) -> Vec<usize> {
    (0..levels).map(|k| base_n << k).collect()
}

fn random_free(n: usize, fixed: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for &i in fixed {
        v[i] = 0.0;
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfSupRow {
    pub n: usize,
    pub h_max: f64,
    pub alpha: f64,
    pub null_modes: usize,
    /// `|sup-quotient of the minimizer − α|`.
    pub certificate_gap: f64,
    /// `α` over the value on the previous level.
    pub ratio_to_previous: Option<f64>,
}

pub fn inf_sup_sweep(pair: ElementPair, ns: &[usize], quad_degree: usize) -> Result<Vec<InfSupRow>> {
    let mut rows: Vec<InfSupRow> = Vec::new();
    for (level, &n) in ns.iter().enumerate() {
        let row = (|| {
            let sys = level_system(n, pair, quad_degree)?;
            let ctx = DualNormContext::new(&sys)?;
            let r = inf_sup_constant(&sys, &ctx)?;
            Ok(InfSupRow {
                n,
                h_max: sys.space().mesh().h_max(),
                alpha: r.alpha,
                null_modes: r.null_modes,
                certificate_gap: (r.certificate - r.alpha).abs(),
                ratio_to_previous: rows.last().map(|p| r.alpha / p.alpha),
            })
        })()
        .map_err(|e| Error::at_level(level, e))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Relative spread `(max − min) / max` of a positive series.
pub fn relative_variation(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    (max - min) / max
}

pub fn max_over_min(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub n: usize,
    pub h_max: f64,
    pub c_star: f64,
    pub dim_vh: usize,
    pub samples: usize,
    /// Largest `‖w‖_{V_h*} − ‖w‖_{X_h*}` relative to `‖w‖_{X_h*}`.
    pub worst_upper: f64,
    /// Largest `C_*‖w‖_{X_h*} − ‖w‖_{V_h*}` relative to `‖w‖_{X_h*}`.
    pub worst_lower: f64,
}

/// `C_*` per level and both sides of the norm equivalence on random
/// `w ∈ V_h` acting through the L² pairing.
pub fn equivalence_sweep(
    pair: ElementPair,
    ns: &[usize],
    samples: usize,
    seed: u64,
    quad_degree: usize,
) -> Result<Vec<EquivalenceRow>> {
    let mut rows = Vec::new();
    for (level, &n) in ns.iter().enumerate() {
        let row = (|| {
            let sys = level_system(n, pair, quad_degree)?;
            let ctx = DualNormContext::new(&sys)?;
            let eq = equivalence_constant(&sys)?;
            let vh = DivergenceFreeBasis::new(&sys)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64));
            let (mut worst_upper, mut worst_lower) = (f64::MIN, f64::MIN);
            for _ in 0..samples {
                let c: Vec<f64> = (0..vh.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w = sys.m_vel.mul_vec(&vh.field(sys.space(), &c));
                let x = ctx.dual_norm_xh(&w)?;
                let v = ctx.dual_norm_vh(&w)?;
                worst_upper = worst_upper.max((v - x) / x);
                worst_lower = worst_lower.max((eq.c_star * x - v) / x);
            }
            Ok(EquivalenceRow {
                n,
                h_max: sys.space().mesh().h_max(),
                c_star: eq.c_star,
                dim_vh: eq.dim_vh,
                samples,
                worst_upper,
                worst_lower,
            })
        })()
        .map_err(|e| Error::at_level(level, e))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub n: usize,
    pub h_max: f64,
    pub ratio: f64,
    pub grad_norm: f64,
    pub exact_grad_norm: f64,
    /// Largest `|(Pu − u, v)|` over random unit-gradient `v ∈ V_h`.
    pub orthogonality: f64,
}

pub const PROJECTION_CSV_HEADER: &str = "n,h_max,ratio,grad_norm,exact_grad_norm,orthogonality";

/// Stability ratio of the L² projection onto `V_h` for the probe field.
pub fn projection_stability_sweep(
    pair: ElementPair,
    ns: &[usize],
    orthogonality_samples: usize,
    seed: u64,
    quad_degree: usize,
) -> Result<Vec<ProjectionRow>> {
    let probe = probe_field();
    let mut rows = Vec::new();
    for (level, &n) in ns.iter().enumerate() {
        let row = (|| {
            let sys = level_system(n, pair, quad_degree)?;
            let sp = sys.space();
            let proj = probe_projection(&sys)?;
            let ctx = DualNormContext::new(&sys)?;
            let quad = sp.quadrature(EXACT_QUADRATURE_DEGREE)?;
            let g = assemble_load(sp, &quad, |x, _| probe.velocity(x, 0.0), 0.0);
            let mp = sys.m_vel.mul_vec(&proj.coeffs);
            let defect: Vec<f64> = mp.iter().zip(&g).map(|(a, b)| a - b).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64));
            let mut orthogonality = 0.0f64;
            for _ in 0..orthogonality_samples {
                let w = random_free(sp.n_vel_dofs(), sp.dirichlet_dofs(), &mut rng);
                let v = ctx.riesz_vh(&w)?;
                let scale = sys.a_visc.bilinear(&v, &v).sqrt();
                if scale > 0.0 {
                    orthogonality = orthogonality.max(dot(&defect, &v).abs() / scale);
                }
            }
            Ok(ProjectionRow {
                n,
                h_max: sp.mesh().h_max(),
                ratio: proj.ratio,
                grad_norm: proj.grad_norm,
                exact_grad_norm: proj.exact_grad_norm,
                orthogonality,
            })
        })()
        .map_err(|e| Error::at_level(level, e))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn projection_csv(rows: &[ProjectionRow]) -> String {
    let mut out = String::from(PROJECTION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n, r.h_max, r.ratio, r.grad_norm, r.exact_grad_norm, r.orthogonality
        ));
    }
    out
}

/// Largest `|vᵀN(w)v| / ‖∇v‖²` over random fields vanishing on the
/// boundary.
pub fn skew_symmetry_defect(sys: &AssembledSystem, samples: usize, seed: u64) -> Result<f64> {
    let sp = sys.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let w = random_free(sp.n_vel_dofs(), sp.dirichlet_dofs(), &mut rng);
        let v = random_free(sp.n_vel_dofs(), sp.dirichlet_dofs(), &mut rng);
        let n = sys.convection(&w)?;
        worst = worst.max(n.bilinear(&v, &v).abs() / sys.a_visc.bilinear(&v, &v));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spreads() {
        assert!((relative_variation(&[1.0, 0.95, 0.9]) - 0.1).abs() < 1e-15);
        assert_eq!(max_over_min(&[2.0, 1.0, 4.0]), 4.0);
        assert_eq!(refinement_levels(4, 3), vec![4, 8, 16]);
    }

    #[test]
    fn taylor_hood_inf_sup_is_level_independent() {
        let rows = inf_sup_sweep(ElementPair::TaylorHood, &[2, 4, 8], 5).unwrap();
        let alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
        assert!(relative_variation(&alphas) < 0.1, "{alphas:?}");
        assert!(rows.iter().all(|r| r.null_modes == 0 && r.certificate_gap < 1e-8));
        assert!(rows[0].ratio_to_previous.is_none());
    }

    #[test]
    fn p1p1_inf_sup_declines() {
        let rows = inf_sup_sweep(ElementPair::P1P1, &[4, 8, 16], 5).unwrap();
        for r in &rows[1..] {
            assert!(r.ratio_to_previous.unwrap() < 0.9, "{rows:?}");
        }
    }

    #[test]
    fn equivalence_sweep_small() {
        let rows = equivalence_sweep(ElementPair::TaylorHood, &[2, 4], 20, 1, 5).unwrap();
        for r in &rows {
            assert!(r.c_star > 0.0 && r.c_star <= 1.0);
            assert!(r.worst_upper <= 1e-10 && r.worst_lower <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn projection_sweep_small() {
        let rows = projection_stability_sweep(ElementPair::Mini, &[2, 4, 8], 20, 3, 5).unwrap();
        assert!(rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0 && r.orthogonality <= 1e-10));
        let csv = projection_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn convection_is_skew() {
        let sys = level_system(4, ElementPair::TaylorHood, 5).unwrap();
        assert!(skew_symmetry_defect(&sys, 50, 2).unwrap() <= 1e-12);
    }
}
