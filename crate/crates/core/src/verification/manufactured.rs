//! Closed-form solutions of the Navier-Stokes equations on the unit square
//! with the forcing that makes them exact.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    /// `u = curl ψ` with `ψ = x²(1−x)²y²(1−y)² cos t`,
    /// `p = sin(πx) cos(πy) cos t`.
    StreamVortex,
    /// `u = 0`, `p = x + y − 1`: a steady state contained in every pair.
    StokesPoly,
    Zero,
}

impl SolutionKind {
    pub const ALL: [SolutionKind; 3] = [SolutionKind::StreamVortex, SolutionKind::StokesPoly, SolutionKind::Zero];

    pub fn name(self) -> &'static str {
        match self {
            SolutionKind::StreamVortex => "stream_vortex",
            SolutionKind::StokesPoly => "stokes_poly",
            SolutionKind::Zero => "zero",
        }
    }
}

impl fmt::Display for SolutionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolutionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        SolutionKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::UnknownSolution(s.to_string()))
    }
}

/// A manufactured pair `(u, p)` together with the viscosity that enters its
/// forcing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedSolution {
    pub kind: SolutionKind,
    pub nu: f64,
}

pub fn manufactured_solution(id: &str, nu: f64) -> Result<ManufacturedSolution> {
    ManufacturedSolution::new(id.parse()?, nu)
}

/// `g(s) = s²(1−s)²` and its first three derivatives.
#[inline]
fn g(s: f64) -> [f64; 4] {
    let r = 1.0 - s;
    [
        s * s * r * r,
        2.0 * s - 6.0 * s * s + 4.0 * s * s * s,
        2.0 - 12.0 * s + 12.0 * s * s,
        -12.0 + 24.0 * s,
    ]
}

impl ManufacturedSolution {
    pub fn new(kind: SolutionKind, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
        }
        Ok(ManufacturedSolution { kind, nu })
    }

    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        match self.kind {
            SolutionKind::StreamVortex => {
                let (gx, gy, c) = (g(x[0]), g(x[1]), t.cos());
                [gx[0] * gy[1] * c, -gx[1] * gy[0] * c]
            }
            SolutionKind::StokesPoly | SolutionKind::Zero => [0.0; 2],
        }
    }

    /// `[[∂x u1, ∂y u1], [∂x u2, ∂y u2]]`.
    pub fn velocity_gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        match self.kind {
            SolutionKind::StreamVortex => {
                let (gx, gy, c) = (g(x[0]), g(x[1]), t.cos());
                [
                    [gx[1] * gy[1] * c, gx[0] * gy[2] * c],
                    [-gx[2] * gy[0] * c, -gx[1] * gy[1] * c],
                ]
            }
            SolutionKind::StokesPoly | SolutionKind::Zero => [[0.0; 2]; 2],
        }
    }

    pub fn velocity_laplacian(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        match self.kind {
            SolutionKind::StreamVortex => {
                let (gx, gy, c) = (g(x[0]), g(x[1]), t.cos());
                [
                    (gx[2] * gy[1] + gx[0] * gy[3]) * c,
                    -(gx[3] * gy[0] + gx[1] * gy[2]) * c,
                ]
            }
            SolutionKind::StokesPoly | SolutionKind::Zero => [0.0; 2],
        }
    }

    pub fn velocity_time_derivative(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        match self.kind {
            SolutionKind::StreamVortex => {
                let (gx, gy, s) = (g(x[0]), g(x[1]), -t.sin());
                [gx[0] * gy[1] * s, -gx[1] * gy[0] * s]
            }
            SolutionKind::StokesPoly | SolutionKind::Zero => [0.0; 2],
        }
    }

    /// Zero-mean pressure.
    pub fn pressure(&self, x: [f64; 2], t: f64) -> f64 {
        match self.kind {
            SolutionKind::StreamVortex => (PI * x[0]).sin() * (PI * x[1]).cos() * t.cos(),
            SolutionKind::StokesPoly => x[0] + x[1] - 1.0,
            SolutionKind::Zero => 0.0,
        }
    }

    pub fn pressure_gradient(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        match self.kind {
            SolutionKind::StreamVortex => {
                let c = t.cos();
                [
                    PI * (PI * x[0]).cos() * (PI * x[1]).cos() * c,
                    -PI * (PI * x[0]).sin() * (PI * x[1]).sin() * c,
                ]
            }
            SolutionKind::StokesPoly => [1.0, 1.0],
            SolutionKind::Zero => [0.0; 2],
        }
    }

    /// `f = u_t + (u·∇)u − νΔu + ∇p`.
    pub fn forcing(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let u = self.velocity(x, t);
        let du = self.velocity_gradient(x, t);
        let ut = self.velocity_time_derivative(x, t);
        let lap = self.velocity_laplacian(x, t);
        let gp = self.pressure_gradient(x, t);
        let mut f = [0.0; 2];
        for c in 0..2 {
            f[c] = ut[c] + u[0] * du[c][0] + u[1] * du[c][1] - self.nu * lap[c] + gp[c];
        }
        f
    }

    /// True when the velocity does not depend on time.
    pub fn is_steady(&self) -> bool {
        !matches!(self.kind, SolutionKind::StreamVortex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vortex(nu: f64) -> ManufacturedSolution {
        ManufacturedSolution::new(SolutionKind::StreamVortex, nu).unwrap()
    }

    #[test]
    fn parses_ids() {
        assert_eq!("stream_vortex".parse::<SolutionKind>().unwrap(), SolutionKind::StreamVortex);
        assert_eq!("Stokes-Poly".parse::<SolutionKind>().unwrap(), SolutionKind::StokesPoly);
        assert!(matches!(manufactured_solution("taylor_green", 1.0), Err(Error::UnknownSolution(_))));
        assert!(manufactured_solution("zero", 0.0).is_err());
    }

    #[test]
    fn vortex_is_divergence_free() {
        let s = vortex(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let du = s.velocity_gradient(x, rng.gen_range(0.0..2.0));
            assert!((du[0][0] + du[1][1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn vortex_vanishes_on_the_boundary() {
        let s = vortex(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 0..100 {
            let r = rng.gen::<f64>();
            let x = match k % 4 {
                0 => [r, 0.0],
                1 => [1.0, r],
                2 => [r, 1.0],
                _ => [0.0, r],
            };
            let u = s.velocity(x, 0.3);
            assert!(u[0].abs() <= 1e-12 && u[1].abs() <= 1e-12);
        }
    }

    #[test]
    fn pressures_have_zero_mean() {
        // Tensor Gauss-Legendre with 20 points per direction.
        let (nodes, weights) = crate::elements::quadrature::gauss_legendre_unit(20);
        for kind in SolutionKind::ALL {
            let s = ManufacturedSolution::new(kind, 1.0).unwrap();
            let mut mean = 0.0;
            for (xi, wi) in nodes.iter().zip(&weights) {
                for (yj, wj) in nodes.iter().zip(&weights) {
                    mean += wi * wj * s.pressure([*xi, *yj], 0.4);
                }
            }
            assert!(mean.abs() <= 1e-10, "{kind}: {mean}");
        }
    }

    /// Central differences of the closed-form fields, independent of the
    /// hand-derived gradients.
    fn fd_forcing(s: &ManufacturedSolution, x: [f64; 2], t: f64, h: f64) -> [f64; 2] {
        let u = |x: [f64; 2], t: f64| s.velocity(x, t);
        let p = |x: [f64; 2]| s.pressure(x, t);
        let mut f = [0.0; 2];
        let u0 = u(x, t);
        for c in 0..2 {
            let ut = (u(x, t + h)[c] - u(x, t - h)[c]) / (2.0 * h);
            let mut conv = 0.0;
            let mut lap = 0.0;
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                conv += u0[d] * (u(xp, t)[c] - u(xm, t)[c]) / (2.0 * h);
                lap += (u(xp, t)[c] - 2.0 * u0[c] + u(xm, t)[c]) / (h * h);
            }
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let dp = (p(xp) - p(xm)) / (2.0 * h);
            f[c] = ut + conv - s.nu * lap + dp;
        }
        f
    }

    #[test]
    fn forcing_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for nu in [1.0, 0.01] {
            let s = vortex(nu);
            for _ in 0..50 {
                let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
                let t = rng.gen_range(0.0..2.0);
                let exact = s.forcing(x, t);
                let fd = fd_forcing(&s, x, t, 1e-5);
                let scale = 1.0 + exact[0].abs().max(exact[1].abs());
                for c in 0..2 {
                    assert!((exact[c] - fd[c]).abs() <= 1e-6 * scale, "{exact:?} vs {fd:?}");
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = vortex(1.0);
        let h = 1e-6;
        let x = [0.31, 0.72];
        let du = s.velocity_gradient(x, 0.5);
        for c in 0..2 {
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (s.velocity(xp, 0.5)[c] - s.velocity(xm, 0.5)[c]) / (2.0 * h);
                assert!((fd - du[c][d]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn stokes_poly_is_steady_and_balanced() {
        let s = ManufacturedSolution::new(SolutionKind::StokesPoly, 0.5).unwrap();
        assert!(s.is_steady());
        assert_eq!(s.forcing([0.2, 0.9], 3.0), [1.0, 1.0]);
        let z = ManufacturedSolution::new(SolutionKind::Zero, 1.0).unwrap();
        assert_eq!(z.forcing([0.5, 0.5], 1.0), [0.0, 0.0]);
    }
}
