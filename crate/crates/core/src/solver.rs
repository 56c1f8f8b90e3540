//! Linearly implicit Backward Euler stepping for the Navier-Stokes
//! equations. Each step solves
//!
//! ```text
//! (M/Δt + νA + N(uⁿ)) uⁿ⁺¹ − Bᵀ pⁿ⁺¹ = M uⁿ/Δt + Fⁿ⁺¹
//!                        −B uⁿ⁺¹ + m λ = 0
//!                             mᵀ pⁿ⁺¹ = 0
//! ```
//!
//! where `N(w)` is the skew-symmetric convection operator and `m` the
//! pressure mean functional.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledSystem, SaddleOperator, SparseMatrix};
use crate::error::{Error, Result};
use crate::norms::{dot, DualNormContext, L2Projector, EXACT_QUADRATURE_DEGREE};
use crate::sparse_linalg::SymbolicFactorization;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    Interpolant,
    /// L²-orthogonal projection onto the discretely divergence-free space.
    L2Projection,
}

impl std::str::FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "interpolant" => Ok(InitialCondition::Interpolant),
            "l2_projection" | "projection" => Ok(InitialCondition::L2Projection),
            other => Err(Error::InvalidArgument(format!(
                "unknown initial condition '{other}' (expected interpolant or l2_projection)"
            ))),
        }
    }
}

/// Advecting field used in the convection operator.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Convection {
    /// `N(uⁿ)`, the scheme proper.
    #[default]
    Linearized,
    /// `N(w)` for a fixed coefficient vector `w`.
    Frozen(Vec<f64>),
    /// Stokes flow.
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub initial_condition: InitialCondition,
    pub convection: Convection,
    /// Dual norms of the time derivative, forcing and momentum residual at
    /// every step.
    pub diagnostics: bool,
    pub keep_snapshots: bool,
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64, n_steps: usize) -> Result<Self> {
        let c = SolverConfig {
            nu,
            dt,
            n_steps,
            initial_condition: InitialCondition::Interpolant,
            convection: Convection::Linearized,
            diagnostics: true,
            keep_snapshots: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
    pub n: usize,
}

/// Quantities of one step `n → n+1`. Functionals are measured in the
/// discrete dual norms of the velocity space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `‖uⁿ⁺¹ − uⁿ‖`.
    pub increment_l2: f64,
    pub dtu_dual_xh: f64,
    pub dtu_dual_vh: f64,
    /// `‖fⁿ⁺¹‖_{X_h*}`.
    pub f_dual_xh: f64,
    /// `v ↦ (d_t u, v) + b(uⁿ, uⁿ⁺¹, v) + ν(∇uⁿ⁺¹, ∇v) − (fⁿ⁺¹, v)`.
    pub residual_dual_xh: f64,
    /// The same functional without the time derivative.
    pub operator_dual_xh: f64,
    /// `(fⁿ⁺¹, uⁿ⁺¹)`.
    pub f_pairing: f64,
    /// Relative residual of the linear solve.
    pub solve_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: usize,
    pub t: f64,
    pub l2_u: f64,
    pub h1semi_u: f64,
    pub l2_p: f64,
    /// Euclidean norm of `B uⁿ`.
    pub divergence: f64,
    /// `(1, pⁿ)`.
    pub pressure_mean: f64,
    /// Step ending at this record; absent for the initial state.
    pub step: Option<StepDiagnostics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub nu: f64,
    pub dt: f64,
    pub diagnostics: bool,
    pub records: Vec<Record>,
    pub snapshots: Vec<State>,
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,l2_u,h1semi_u,l2_p,increment_l2,dtu_dual_Xh,dtu_dual_Vh,f_dual";

/// Terms of the discrete energy identity
///
/// ```text
/// ‖u^N‖² + Σ‖uⁿ⁺¹ − uⁿ‖² + 2νΔt Σ‖∇uⁿ⁺¹‖² − 2Δt Σ(fⁿ⁺¹, uⁿ⁺¹) − ‖u⁰‖² = 0
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub final_energy: f64,
    pub increments: f64,
    pub dissipation: f64,
    pub work: f64,
    pub initial_energy: f64,
    pub residual: f64,
    /// `|residual|` over the largest term.
    pub relative: f64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    /// Per-step diagnostics, failing when they were not recorded.
    pub fn steps(&self) -> Result<Vec<&StepDiagnostics>> {
        if !self.diagnostics {
            return Err(Error::MissingDiagnostics("the run was made without diagnostics".into()));
        }
        self.records[1..]
            .iter()
            .map(|r| {
                r.step
                    .as_ref()
                    .ok_or_else(|| Error::MissingDiagnostics(format!("no step data at record {}", r.n)))
            })
            .collect()
    }

    pub fn energy_balance(&self) -> Result<EnergyBalance> {
        let steps = self.steps()?;
        let first = &self.records[0];
        let last = self.records.last().expect("at least one record");
        let mut increments = 0.0;
        let mut dissipation = 0.0;
        let mut work = 0.0;
        for (r, s) in self.records[1..].iter().zip(steps) {
            increments += s.increment_l2 * s.increment_l2;
            dissipation += 2.0 * self.nu * self.dt * r.h1semi_u * r.h1semi_u;
            work += 2.0 * self.dt * s.f_pairing;
        }
        let final_energy = last.l2_u * last.l2_u;
        let initial_energy = first.l2_u * first.l2_u;
        let residual = final_energy + increments + dissipation - work - initial_energy;
        let scale = [final_energy, increments, dissipation, work.abs(), initial_energy]
            .into_iter()
            .fold(f64::MIN_POSITIVE, f64::max);
        Ok(EnergyBalance {
            final_energy,
            increments,
            dissipation,
            work,
            initial_energy,
            residual,
            relative: residual.abs() / scale,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            write!(out, "{},{},{},{}", r.t, r.l2_u, r.h1semi_u, r.l2_p).unwrap();
            match &r.step {
                Some(s) => writeln!(
                    out,
                    ",{},{},{},{}",
                    s.increment_l2, s.dtu_dual_xh, s.dtu_dual_vh, s.f_dual_xh
                )
                .unwrap(),
                None => out.push_str(",,,,\n"),
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

/// Stepper for one assembled space. The constant part `M/Δt + νA` and the
/// elimination structure of the saddle matrix are computed once.
pub struct Solver<'a> {
    sys: &'a AssembledSystem,
    config: SolverConfig,
    base: SparseMatrix,
    operator: SaddleOperator,
    symbolic: SymbolicFactorization,
    duals: Option<DualNormContext>,
    frozen: Option<SparseMatrix>,
}

impl<'a> Solver<'a> {
    pub fn new(sys: &'a AssembledSystem, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let space = sys.space();
        let mask: Vec<bool> = (0..space.n_vel_dofs()).map(|i| space.is_dirichlet(i)).collect();
        let base = sys.m_vel.lin_comb(1.0 / config.dt, &sys.a_visc, config.nu);
        if !base.same_pattern(&sys.a_visc) {
            return Err(Error::Solver("mass and stiffness patterns differ".into()));
        }
        let operator = SaddleOperator::new(&base, &sys.b_div, &sys.mean_vec, &mask)?;
        let symbolic = SymbolicFactorization::new(operator.matrix())?;
        let duals = if config.diagnostics {
            Some(DualNormContext::new(sys)?)
        } else {
            None
        };
        let frozen = match &config.convection {
            Convection::Frozen(w) => Some(sys.convection(w)?),
            _ => None,
        };
        Ok(Solver {
            sys,
            config,
            base,
            operator,
            symbolic,
            duals,
            frozen,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn system(&self) -> &AssembledSystem {
        self.sys
    }

    pub fn dual_norms(&self) -> Option<&DualNormContext> {
        self.duals.as_ref()
    }

    /// `u⁰_h` from the configured rule and a zero pressure.
    pub fn initialize(&self, u0: impl Fn([f64; 2]) -> [f64; 2]) -> Result<State> {
        let space = self.sys.space();
        let u = match self.config.initial_condition {
            InitialCondition::Interpolant => {
                let mut u = space.interpolate(|x, _| u0(x), 0.0);
                for &i in space.dirichlet_dofs() {
                    u[i] = 0.0;
                }
                u
            }
            InitialCondition::L2Projection => {
                let quad = space.quadrature(EXACT_QUADRATURE_DEGREE)?;
                let g = crate::assembly::assemble_load(space, &quad, |x, _| u0(x), 0.0);
                L2Projector::new(self.sys)?.project_pairing(&g)?
            }
        };
        Ok(State {
            u,
            p: vec![0.0; space.n_pres_dofs()],
            t: 0.0,
            n: 0,
        })
    }

    fn convection_matrix(&self, u: &[f64]) -> Result<Option<SparseMatrix>> {
        Ok(match &self.config.convection {
            Convection::Linearized => Some(self.sys.convection(u)?),
            Convection::Frozen(_) => self.frozen.clone(),
            Convection::Off => None,
        })
    }

    /// Advances `state` by one step with forcing `f(x, t)`.
    pub fn step(
        &mut self,
        state: &State,
        f: &dyn Fn([f64; 2], f64) -> [f64; 2],
    ) -> Result<(State, Option<StepDiagnostics>)> {
        let sys = self.sys;
        let dt = self.config.dt;
        let t_next = (state.n + 1) as f64 * dt;
        let conv = self.convection_matrix(&state.u)?;
        let mut k = self.base.clone();
        if let Some(nm) = &conv {
            debug_assert!(nm.same_pattern(&k));
            for (kv, nv) in k.values_mut().iter_mut().zip(nm.values()) {
                *kv += nv;
            }
        }
        self.operator.update_velocity_block(&k);
        let load = sys.load(f, t_next);
        let mut rhs_u = sys.m_vel.mul_vec(&state.u);
        for (r, l) in rhs_u.iter_mut().zip(&load) {
            *r = *r / dt + l;
        }
        let rhs = self.operator.rhs(&rhs_u, None);
        let lu = self.symbolic.factorize(self.operator.matrix())?;
        let x = lu.solve(&rhs)?;
        let solve_residual = relative_residual(self.operator.matrix(), &x, &rhs);
        if !(solve_residual <= 1e-10) {
            return Err(Error::Solver(format!(
                "linear residual {solve_residual:.3e} exceeds 1e-10"
            )));
        }
        let (u, p, _) = self.operator.split(&x);
        let next = State {
            u: u.to_vec(),
            p: p.to_vec(),
            t: t_next,
            n: state.n + 1,
        };
        let diag = match &self.duals {
            Some(duals) => Some(step_diagnostics(sys, duals, state, &next, conv.as_ref(), &load, self.config.nu, dt, solve_residual)?),
            None => None,
        };
        Ok((next, diag))
    }

    pub fn record(&self, state: &State, step: Option<StepDiagnostics>) -> Record {
        let sys = self.sys;
        Record {
            n: state.n,
            t: state.t,
            l2_u: sys.m_vel.bilinear(&state.u, &state.u).max(0.0).sqrt(),
            h1semi_u: sys.a_visc.bilinear(&state.u, &state.u).max(0.0).sqrt(),
            l2_p: sys.m_pres.bilinear(&state.p, &state.p).max(0.0).sqrt(),
            divergence: sys.b_div.mul_vec(&state.u).iter().map(|v| v * v).sum::<f64>().sqrt(),
            pressure_mean: dot(&sys.mean_vec, &state.p),
            step,
        }
    }

    /// Runs the configured number of steps. The observer sees every state,
    /// starting with the initial one.
    pub fn run(
        &mut self,
        u0: impl Fn([f64; 2]) -> [f64; 2],
        f: impl Fn([f64; 2], f64) -> [f64; 2],
        mut observer: impl FnMut(&State) -> Result<()>,
    ) -> Result<Trajectory> {
        let mut state = self.initialize(u0)?;
        observer(&state)?;
        let mut records = vec![self.record(&state, None)];
        let mut snapshots = Vec::new();
        if self.config.keep_snapshots {
            snapshots.push(state.clone());
        }
        for n in 0..self.config.n_steps {
            let (next, diag) = self.step(&state, &f).map_err(|e| Error::at_step(n + 1, e))?;
            observer(&next).map_err(|e| Error::at_step(n + 1, e))?;
            records.push(self.record(&next, diag));
            if self.config.keep_snapshots {
                snapshots.push(next.clone());
            }
            state = next;
        }
        Ok(Trajectory {
            nu: self.config.nu,
            dt: self.config.dt,
            diagnostics: self.config.diagnostics,
            records,
            snapshots,
        })
    }
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = a.mul_vec(x);
    let res = r.iter().zip(b).map(|(ri, bi)| (ri - bi).powi(2)).sum::<f64>().sqrt();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = a.norm1() * xn + bn;
    if scale == 0.0 {
        0.0
    } else {
        res / scale
    }
}

#[allow(clippy::too_many_arguments)]
fn step_diagnostics(
    sys: &AssembledSystem,
    duals: &DualNormContext,
    prev: &State,
    next: &State,
    conv: Option<&SparseMatrix>,
    load: &[f64],
    nu: f64,
    dt: f64,
    solve_residual: f64,
) -> Result<StepDiagnostics> {
    let du: Vec<f64> = next.u.iter().zip(&prev.u).map(|(a, b)| a - b).collect();
    let m_du = sys.m_vel.mul_vec(&du);
    let dtu: Vec<f64> = m_du.iter().map(|v| v / dt).collect();
    // G(v) = b(uⁿ, uⁿ⁺¹, v) + ν(∇uⁿ⁺¹, ∇v) − (fⁿ⁺¹, v)
    let mut op = sys.a_visc.mul_vec(&next.u);
    op.iter_mut().for_each(|v| *v *= nu);
    if let Some(nm) = conv {
        for (o, c) in op.iter_mut().zip(nm.mul_vec(&next.u)) {
            *o += c;
        }
    }
    for (o, l) in op.iter_mut().zip(load) {
        *o -= l;
    }
    let residual: Vec<f64> = dtu.iter().zip(&op).map(|(a, b)| a + b).collect();
    Ok(StepDiagnostics {
        increment_l2: dot(&du, &m_du).max(0.0).sqrt(),
        dtu_dual_xh: duals.dual_norm_xh(&dtu)?,
        dtu_dual_vh: duals.dual_norm_vh(&dtu)?,
        f_dual_xh: duals.dual_norm_xh(load)?,
        residual_dual_xh: duals.dual_norm_xh(&residual)?,
        operator_dual_xh: duals.dual_norm_xh(&op)?,
        f_pairing: dot(load, &next.u),
        solve_residual,
    })
}
