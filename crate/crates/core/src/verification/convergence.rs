//! Convergence studies against a manufactured solution.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::manufactured::{ManufacturedSolution, SolutionKind};
use super::stability::{stability_report, StabilityReport};
use crate::assembly::AssembledSystem;
use crate::elements::{build_space, CellEvaluator, ElementPair, FeSpace, SpaceQuadrature};
use crate::error::{Error, Result};
use crate::mesh::generate_structured_square;
use crate::norms::{constants_report, ConstantsOptions, ConstantsReport, DualNormContext};
use crate::solver::{InitialCondition, Solver, SolverConfig, State};

/// Degree of the rule used for error integrals.
pub const ERROR_QUADRATURE_DEGREE: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `Δt = h²`.
    DtH2,
    /// `Δt = h`.
    DtH,
    /// `Δt = dt0` on every level.
    FixedDt,
    /// Mesh fixed, `Δt = dt0 · 2^{−level}`.
    FixedHDtHalving,
}

impl Coupling {
    pub const ALL: [Coupling; 4] = [Coupling::DtH2, Coupling::DtH, Coupling::FixedDt, Coupling::FixedHDtHalving];

    pub fn name(self) -> &'static str {
        match self {
            Coupling::DtH2 => "dt_h2",
            Coupling::DtH => "dt_h",
            Coupling::FixedDt => "fixed_dt",
            Coupling::FixedHDtHalving => "fixed_h_dt_halving",
        }
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Coupling::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown coupling '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub pair: ElementPair,
    pub solution: SolutionKind,
    pub nu: f64,
    pub t_final: f64,
    pub coupling: Coupling,
    /// Cells per side on the coarsest level.
    pub base_n: usize,
    pub levels: usize,
    /// Time step of the fixed couplings (first level for halving).
    pub dt0: f64,
    /// Cells per side for `fixed_h_dt_halving`.
    pub fixed_n: usize,
    pub quad_degree: usize,
    pub initial_condition: InitialCondition,
    /// Evaluate the constants and the stability report on every level.
    pub check_stability: bool,
    pub equivalence: bool,
    pub c1_samples: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            pair: ElementPair::TaylorHood,
            solution: SolutionKind::StreamVortex,
            nu: 1.0,
            t_final: 1.0,
            coupling: Coupling::DtH2,
            base_n: 4,
            levels: 4,
            dt0: 0.1,
            fixed_n: 32,
            quad_degree: 5,
            initial_condition: InitialCondition::Interpolant,
            check_stability: false,
            equivalence: false,
            c1_samples: 16,
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 3 {
            return Err(Error::InvalidArgument(format!("a study needs at least 3 levels, got {}", self.levels)));
        }
        for (name, v) in [("nu", self.nu), ("t_final", self.t_final), ("dt0", self.dt0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.base_n == 0 || self.fixed_n == 0 {
            return Err(Error::InvalidArgument("mesh sizes must be positive".into()));
        }
        if self.pair == ElementPair::P1P1 {
            return Err(Error::InvalidArgument("the p1p1 pair is unstable and cannot be time stepped".into()));
        }
        Ok(())
    }

    /// `(n, Δt)` of a level.
    pub fn level_discretization(&self, level: usize) -> (usize, f64) {
        let scale = 1usize << level;
        match self.coupling {
            Coupling::DtH2 => {
                let n = self.base_n * scale;
                (n, 1.0 / (n * n) as f64)
            }
            Coupling::DtH => {
                let n = self.base_n * scale;
                (n, 1.0 / n as f64)
            }
            Coupling::FixedDt => (self.base_n * scale, self.dt0),
            Coupling::FixedHDtHalving => (self.fixed_n, self.dt0 / scale as f64),
        }
    }
}

/// Number of steps reaching `t_final` with step `dt`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let steps = t_final / dt;
    let rounded = steps.round();
    if rounded < 1.0 || (steps - rounded).abs() > 1e-8 * steps.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} does not divide the final time {t_final}"
        )));
    }
    Ok(rounded as usize)
}

/// Errors of a discrete pair against exact fields at the points of a
/// high-order rule.
pub struct ErrorEvaluator<'a> {
    space: &'a FeSpace,
    quad: SpaceQuadrature,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub l2_u: f64,
    pub h1semi_u: f64,
    pub l2_p: f64,
}

impl<'a> ErrorEvaluator<'a> {
    pub fn new(space: &'a FeSpace, degree: usize) -> Result<Self> {
        Ok(ErrorEvaluator {
            space,
            quad: space.quadrature(degree)?,
        })
    }

    pub fn errors(&self, u: &[f64], p: &[f64], exact: &ManufacturedSolution, t: f64) -> FieldErrors {
        let mut ev = CellEvaluator::new(self.space, &self.quad);
        let mut acc = [0.0; 3];
        for c in 0..self.space.n_cells() {
            let geo = self.space.geometry(c);
            for q in 0..self.quad.len() {
                let w = self.quad.rule.weights[q] * geo.det;
                let x = geo.point(self.quad.rule.points[q]);
                let (uh, duh) = ev.velocity(u, c, q);
                let ue = exact.velocity(x, t);
                let due = exact.velocity_gradient(x, t);
                let ph = ev.pressure(p, c, q);
                acc[0] += w * ((ue[0] - uh[0]).powi(2) + (ue[1] - uh[1]).powi(2));
                for i in 0..2 {
                    for j in 0..2 {
                        acc[1] += w * (due[i][j] - duh[i][j]).powi(2);
                    }
                }
                acc[2] += w * (exact.pressure(x, t) - ph).powi(2);
            }
        }
        FieldErrors {
            l2_u: acc[0].sqrt(),
            h1semi_u: acc[1].sqrt(),
            l2_p: acc[2].sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub u_l2_final: f64,
    pub grad_u_l2t: f64,
    pub p_l2t: f64,
    pub p_l1t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// `‖e_u(t*)‖`.
    pub u_l2_final: f64,
    /// `(Δt Σ_{n=1}^N ‖∇e_uⁿ‖²)^{1/2}`.
    pub grad_u_l2t: f64,
    /// `(Δt Σ_{n=1}^N ‖e_pⁿ‖²)^{1/2}`.
    pub p_l2t: f64,
    /// `Δt Σ_{n=1}^N ‖e_pⁿ‖`.
    pub p_l1t: f64,
    /// `‖u⁰ − u⁰_h‖`.
    pub u0_l2: f64,
    /// Observed orders against the previous row.
    pub rates: Option<Rates>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub pair: ElementPair,
    pub coupling: Coupling,
    pub rows: Vec<ConvergenceRow>,
}

pub const CONVERGENCE_CSV_HEADER: &str = "level,n,h,dt,n_steps,u_l2_final,grad_u_l2t,p_l2t,p_l1t,u0_l2,\
rate_u_l2_final,rate_grad_u_l2t,rate_p_l2t,rate_p_l1t";

fn rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

impl ConvergenceTable {
    fn new(pair: ElementPair, coupling: Coupling, mut rows: Vec<ConvergenceRow>) -> Self {
        for k in 1..rows.len() {
            let (a, b) = (&rows[k - 1], &rows[k]);
            let r = Rates {
                u_l2_final: rate(a.u_l2_final, b.u_l2_final),
                grad_u_l2t: rate(a.grad_u_l2t, b.grad_u_l2t),
                p_l2t: rate(a.p_l2t, b.p_l2t),
                p_l1t: rate(a.p_l1t, b.p_l1t),
            };
            rows[k].rates = Some(r);
        }
        ConvergenceTable { pair, coupling, rows }
    }

    /// Rates between the two finest levels.
    pub fn final_rates(&self) -> Option<Rates> {
        self.rows.last().and_then(|r| r.rates)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CONVERGENCE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.level, r.n, r.h, r.dt, r.n_steps, r.u_l2_final, r.grad_u_l2t, r.p_l2t, r.p_l1t, r.u0_l2
            )
            .unwrap();
            match &r.rates {
                Some(k) => writeln!(out, ",{},{},{},{}", k.u_l2_final, k.grad_u_l2t, k.p_l2t, k.p_l1t).unwrap(),
                None => out.push_str(",,,,\n"),
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level: usize,
    pub constants: Option<ConstantsReport>,
    pub stability: Option<StabilityReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub table: ConvergenceTable,
    pub levels: Vec<LevelOutcome>,
    /// Fixed-mesh differences of successive runs, for `fixed_h_dt_halving`.
    pub self_convergence: Option<Vec<SelfConvergenceRow>>,
}

impl ConvergenceStudy {
    /// True when every evaluated stability report passes.
    pub fn stability_pass(&self) -> bool {
        self.levels.iter().filter_map(|l| l.stability.as_ref()).all(|s| s.pass)
    }
}

/// One solver run on a level with the error sums of a table row.
pub fn run_level(cfg: &StudyConfig, level: usize) -> Result<(ConvergenceRow, LevelOutcome)> {
    run_level_with(cfg, level, false).map(|(row, outcome, _)| (row, outcome))
}

fn run_level_with(cfg: &StudyConfig, level: usize, keep: bool) -> Result<(ConvergenceRow, LevelOutcome, Vec<State>)> {
    let (n, dt) = cfg.level_discretization(level);
    let n_steps = step_count(cfg.t_final, dt)?;
    let exact = ManufacturedSolution::new(cfg.solution, cfg.nu)?;
    let mesh = Arc::new(generate_structured_square(n)?);
    let space = Arc::new(build_space(mesh, cfg.pair));
    let sys = AssembledSystem::new(space.clone(), cfg.quad_degree)?;
    let mut scfg = SolverConfig::new(cfg.nu, dt, n_steps)?;
    scfg.initial_condition = cfg.initial_condition;
    scfg.diagnostics = cfg.check_stability;
    scfg.keep_snapshots = keep;
    let errors = ErrorEvaluator::new(&space, ERROR_QUADRATURE_DEGREE)?;
    let mut final_errors = FieldErrors::default();
    let (mut u0_l2, mut grad_sq, mut p_sq, mut p_l1) = (0.0, 0.0, 0.0, 0.0);
    let mut solver = Solver::new(&sys, scfg)?;
    let mut traj = solver.run(
        |x| exact.velocity(x, 0.0),
        |x, t| exact.forcing(x, t),
        |st| {
            let e = errors.errors(&st.u, &st.p, &exact, st.t);
            if st.n == 0 {
                u0_l2 = e.l2_u;
            } else {
                grad_sq += dt * e.h1semi_u * e.h1semi_u;
                p_sq += dt * e.l2_p * e.l2_p;
                p_l1 += dt * e.l2_p;
                final_errors = e;
            }
            Ok(())
        },
    )?;
    let row = ConvergenceRow {
        level,
        n,
        h: 1.0 / n as f64,
        dt,
        n_steps,
        u_l2_final: final_errors.l2_u,
        grad_u_l2t: grad_sq.sqrt(),
        p_l2t: p_sq.sqrt(),
        p_l1t: p_l1,
        u0_l2,
        rates: None,
    };
    let mut outcome = LevelOutcome {
        level,
        constants: None,
        stability: None,
    };
    if cfg.check_stability {
        let ctx = solver
            .dual_norms()
            .cloned()
            .map_or_else(|| DualNormContext::new(&sys), Ok)?;
        let opts = ConstantsOptions {
            equivalence: cfg.equivalence,
            projection: false,
            c1_samples: cfg.c1_samples,
            seed: cfg.seed,
        };
        let constants = constants_report(&sys, &ctx, n, opts)?;
        outcome.stability = Some(stability_report(&traj, &constants, cfg.nu, dt)?);
        outcome.constants = Some(constants);
    }
    let snapshots = std::mem::take(&mut traj.snapshots);
    Ok((row, outcome, snapshots))
}

/// Runs every level of `cfg` and tabulates errors and observed rates.
pub fn convergence_study(cfg: &StudyConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let temporal = cfg.coupling == Coupling::FixedHDtHalving;
    let mut rows = Vec::with_capacity(cfg.levels);
    let mut levels = Vec::with_capacity(cfg.levels);
    let mut runs = Vec::new();
    for level in 0..cfg.levels {
        let (row, outcome, snaps) = run_level_with(cfg, level, temporal).map_err(|e| Error::at_level(level, e))?;
        rows.push(row);
        levels.push(outcome);
        if temporal {
            runs.push(snaps);
        }
    }
    let self_convergence = if temporal {
        let mesh = Arc::new(generate_structured_square(cfg.fixed_n)?);
        let sys = AssembledSystem::new(Arc::new(build_space(mesh, cfg.pair)), cfg.quad_degree)?;
        Some(self_convergence(&sys, &rows, &runs))
    } else {
        None
    };
    Ok(ConvergenceStudy {
        table: ConvergenceTable::new(cfg.pair, cfg.coupling, rows),
        levels,
        self_convergence,
    })
}

/// Difference between the runs with `Δt` and `Δt/2` on one mesh, sampled
/// on the coarse time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergenceRow {
    pub dt: f64,
    /// `‖u_{Δt}(t*) − u_{Δt/2}(t*)‖`.
    pub u_l2_final: f64,
    /// `(Δt Σ ‖∇(u_{Δt} − u_{Δt/2})ⁿ‖²)^{1/2}`.
    pub grad_u_l2t: f64,
    /// `(Δt Σ ‖(p_{Δt} − p_{Δt/2})ⁿ‖²)^{1/2}`.
    pub p_l2t: f64,
    pub rates: Option<SelfRates>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfRates {
    pub u_l2_final: f64,
    pub grad_u_l2t: f64,
    pub p_l2t: f64,
}

fn self_convergence(sys: &AssembledSystem, rows: &[ConvergenceRow], runs: &[Vec<State>]) -> Vec<SelfConvergenceRow> {
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut out: Vec<SelfConvergenceRow> = Vec::new();
    for k in 1..runs.len() {
        let (coarse, fine, dt) = (&runs[k - 1], &runs[k], rows[k - 1].dt);
        let (mut grad, mut pres) = (0.0, 0.0);
        for n in 1..coarse.len() {
            let du = diff(&coarse[n].u, &fine[2 * n].u);
            let dp = diff(&coarse[n].p, &fine[2 * n].p);
            grad += dt * sys.a_visc.bilinear(&du, &du);
            pres += dt * sys.m_pres.bilinear(&dp, &dp);
        }
        let last = diff(&coarse[coarse.len() - 1].u, &fine[fine.len() - 1].u);
        let (u, g, p) = (sys.m_vel.bilinear(&last, &last).sqrt(), grad.sqrt(), pres.sqrt());
        let rates = out.last().map(|a| SelfRates {
            u_l2_final: rate(a.u_l2_final, u),
            grad_u_l2t: rate(a.grad_u_l2t, g),
            p_l2t: rate(a.p_l2t, p),
        });
        out.push(SelfConvergenceRow {
            dt,
            u_l2_final: u,
            grad_u_l2t: g,
            p_l2t: p,
            rates,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn couplings_parse_and_discretize() {
        assert_eq!("dt-h2".parse::<Coupling>().unwrap(), Coupling::DtH2);
        assert!("dt_h3".parse::<Coupling>().is_err());
        let mut c = StudyConfig::default();
        assert_eq!(c.level_discretization(2), (16, 1.0 / 256.0));
        c.coupling = Coupling::DtH;
        assert_eq!(c.level_discretization(1), (8, 0.125));
        c.coupling = Coupling::FixedHDtHalving;
        assert_eq!(c.level_discretization(3), (32, 0.0125));
        c.coupling = Coupling::FixedDt;
        assert_eq!(c.level_discretization(3), (32, 0.1));
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(1.0, 1.0 / 1024.0).unwrap(), 1024);
        assert_eq!(step_count(1.0, 0.0125).unwrap(), 80);
        assert!(step_count(1.0, 0.3).is_err());
    }

    #[test]
    fn validation() {
        let mut c = StudyConfig {
            levels: 2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.levels = 3;
        assert!(c.validate().is_ok());
        c.pair = ElementPair::P1P1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn errors_vanish_for_a_contained_solution() {
        let mesh = Arc::new(generate_structured_square(4).unwrap());
        let space = build_space(mesh, ElementPair::TaylorHood);
        let exact = ManufacturedSolution::new(SolutionKind::StokesPoly, 1.0).unwrap();
        let p = space.interpolate_pressure(|x, t| exact.pressure(x, t), 0.0);
        let e = ErrorEvaluator::new(&space, 7)
            .unwrap()
            .errors(&vec![0.0; space.n_vel_dofs()], &p, &exact, 0.0);
        assert!(e.l2_u == 0.0 && e.h1semi_u == 0.0 && e.l2_p < 1e-14);
    }

    #[test]
    fn rates_are_log2_ratios() {
        let row = |level, e: f64| ConvergenceRow {
            level,
            n: 4 << level,
            h: 0.25 / (1 << level) as f64,
            dt: 0.1,
            n_steps: 10,
            u_l2_final: e,
            grad_u_l2t: e,
            p_l2t: 2.0 * e,
            p_l1t: e * e,
            u0_l2: 0.0,
            rates: None,
        };
        let t = ConvergenceTable::new(ElementPair::Mini, Coupling::DtH, vec![row(0, 1.0), row(1, 0.25), row(2, 0.0625)]);
        let r = t.final_rates().unwrap();
        assert!((r.u_l2_final - 2.0).abs() < 1e-14 && (r.p_l1t - 4.0).abs() < 1e-14);
        assert!(t.rows[0].rates.is_none());
        let csv = t.to_csv();
        assert_eq!(csv.lines().next().unwrap(), CONVERGENCE_CSV_HEADER);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn small_mini_study_converges() {
        let cfg = StudyConfig {
            pair: ElementPair::Mini,
            coupling: Coupling::DtH,
            base_n: 2,
            levels: 3,
            check_stability: true,
            ..Default::default()
        };
        let study = convergence_study(&cfg).unwrap();
        let r = study.table.final_rates().unwrap();
        assert!(r.grad_u_l2t > 0.5, "{r:?}");
        assert!(study.stability_pass());
        assert_eq!(study.levels.len(), 3);
        assert!(study.self_convergence.is_none());
    }

    #[test]
    fn self_convergence_isolates_the_time_error() {
        let cfg = StudyConfig {
            coupling: Coupling::FixedHDtHalving,
            fixed_n: 4,
            dt0: 0.25,
            levels: 4,
            ..Default::default()
        };
        let study = convergence_study(&cfg).unwrap();
        let sc = study.self_convergence.unwrap();
        assert_eq!(sc.len(), 3);
        assert!(sc[0].rates.is_none());
        let r = sc[2].rates.unwrap();
        assert!((r.u_l2_final - 1.0).abs() < 0.3, "{sc:?}");
    }
}
