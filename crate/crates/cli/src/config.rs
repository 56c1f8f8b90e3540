//! Run configuration: TOML file, command-line overrides and the resolved
//! form embedded in every report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use nsfem::elements::quadrature::MAX_QUADRATURE_DEGREE;
use nsfem::elements::ElementPair;
use nsfem::solver::InitialCondition;
use nsfem::verification::convergence::{step_count, Coupling};
use nsfem::verification::SolutionKind;

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Time-step one manufactured problem and write its trajectory.
    Solve,
    /// Observed convergence rates over a sequence of meshes.
    Convergence,
    /// Discrete inf-sup constant under refinement.
    Infsup,
    /// Equivalence constant of the two discrete dual norms.
    Equivalence,
    /// Gradient stability of the L² projection onto the divergence-free space.
    ProjectStability,
    /// Energy and pressure stability budget of one run.
    Stability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Convergence => "convergence",
            Command::Infsup => "infsup",
            Command::Equivalence => "equivalence",
            Command::ProjectStability => "project-stability",
            Command::Stability => "stability",
        }
    }

    fn default_levels(self) -> usize {
        match self {
            Command::Convergence | Command::ProjectStability => 4,
            _ => 3,
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the matching key of
/// the configuration file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "taylor-hood|mini|p1p1")]
    pub pair: Option<ElementPair>,
    #[arg(long, global = true, value_name = "stream_vortex|stokes_poly|zero")]
    pub solution: Option<SolutionKind>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub nu: Option<f64>,
    /// Cells per side for single-mesh runs.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Cells per side on the coarsest level of a sweep.
    #[arg(long, global = true)]
    pub base_n: Option<usize>,
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true, conflicts_with = "t_final")]
    pub n_steps: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t_final: Option<f64>,
    #[arg(long, global = true, value_name = "dt_h2|dt_h|fixed_dt|fixed_h_dt_halving")]
    pub coupling: Option<Coupling>,
    /// Time step of the fixed couplings.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub dt0: Option<f64>,
    /// Cells per side for `fixed_h_dt_halving`.
    #[arg(long, global = true)]
    pub fixed_n: Option<usize>,
    /// Quadrature degree of the assembled operators (1 is a debug mode).
    #[arg(long, global = true)]
    pub quad_degree: Option<usize>,
    #[arg(long, global = true, value_name = "interpolant|l2_projection")]
    pub initial_condition: Option<InitialCondition>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Random fields per level in property checks.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Random triples when sampling the trilinear constant.
    #[arg(long, global = true)]
    pub c1_samples: Option<usize>,
    /// Evaluate the stability report on every convergence level.
    #[arg(long, global = true)]
    pub check_stability: bool,
    #[arg(long, short = 'o', global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    pair: Option<ElementPair>,
    solution: Option<SolutionKind>,
    nu: Option<f64>,
    initial_condition: Option<InitialCondition>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    n: Option<usize>,
    base_n: Option<usize>,
    levels: Option<usize>,
    fixed_n: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: Option<f64>,
    n_steps: Option<usize>,
    t_final: Option<f64>,
    coupling: Option<Coupling>,
    dt0: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudySection {
    quad_degree: Option<usize>,
    seed: Option<u64>,
    samples: Option<usize>,
    c1_samples: Option<usize>,
    check_stability: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    problem: ProblemSection,
    #[serde(default)]
    mesh: MeshSection,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    study: StudySection,
    #[serde(default)]
    output: OutputSection,
}

/// Fully resolved configuration of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub pair: ElementPair,
    pub solution: SolutionKind,
    pub nu: f64,
    pub initial_condition: InitialCondition,
    pub n: usize,
    pub base_n: usize,
    pub levels: usize,
    pub fixed_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    pub t_final: f64,
    pub coupling: Coupling,
    pub dt0: f64,
    pub quad_degree: usize,
    pub seed: u64,
    pub samples: usize,
    pub c1_samples: usize,
    pub check_stability: bool,
    pub output_dir: PathBuf,
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        bail!("{name} must be positive, got {v}")
    }
}

fn positive_count(name: &str, v: usize) -> Result<usize> {
    if v > 0 {
        Ok(v)
    } else {
        bail!("{name} must be positive, got 0")
    }
}

impl RunConfig {
    /// Merges the optional file with the flags, fills defaults and
    /// validates.
    pub fn resolve(command: Command, flags: &Overrides) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        if file.time.n_steps.is_some() && file.time.t_final.is_some() {
            bail!("conflicting settings: time.n_steps and time.t_final are mutually exclusive");
        }
        // A duration given on the command line replaces the file's, in
        // either form.
        let (n_steps, t_final) = if flags.n_steps.is_some() || flags.t_final.is_some() {
            (flags.n_steps, flags.t_final)
        } else {
            (file.time.n_steps, file.time.t_final)
        };
        let cfg = RunConfig {
            command,
            pair: flags.pair.or(file.problem.pair).unwrap_or(ElementPair::TaylorHood),
            solution: flags.solution.or(file.problem.solution).unwrap_or(SolutionKind::StreamVortex),
            nu: flags.nu.or(file.problem.nu).unwrap_or(1.0),
            initial_condition: flags
                .initial_condition
                .or(file.problem.initial_condition)
                .unwrap_or_default(),
            n: flags.n.or(file.mesh.n).unwrap_or(8),
            base_n: flags.base_n.or(file.mesh.base_n).unwrap_or(4),
            levels: flags.levels.or(file.mesh.levels).unwrap_or(command.default_levels()),
            fixed_n: flags.fixed_n.or(file.mesh.fixed_n).unwrap_or(32),
            dt: flags.dt.or(file.time.dt),
            n_steps,
            t_final: t_final.unwrap_or(1.0),
            coupling: flags.coupling.or(file.time.coupling).unwrap_or(Coupling::DtH2),
            dt0: flags.dt0.or(file.time.dt0).unwrap_or(0.1),
            quad_degree: flags.quad_degree.or(file.study.quad_degree).unwrap_or(5),
            seed: flags.seed.or(file.study.seed).unwrap_or(0),
            samples: flags.samples.or(file.study.samples).unwrap_or(50),
            c1_samples: flags.c1_samples.or(file.study.c1_samples).unwrap_or(16),
            check_stability: flags.check_stability || file.study.check_stability.unwrap_or(false),
            output_dir: flags
                .output_dir
                .clone()
                .or(file.output.dir)
                .unwrap_or_else(|| PathBuf::from("nsfem-out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        positive("nu", self.nu)?;
        positive("t_final", self.t_final)?;
        positive("dt0", self.dt0)?;
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        for (name, v) in [
            ("n", self.n),
            ("base_n", self.base_n),
            ("levels", self.levels),
            ("fixed_n", self.fixed_n),
            ("samples", self.samples),
            ("c1_samples", self.c1_samples),
        ] {
            positive_count(name, v)?;
        }
        if let Some(n) = self.n_steps {
            positive_count("n_steps", n)?;
        }
        if !(1..=MAX_QUADRATURE_DEGREE).contains(&self.quad_degree) {
            bail!("quad_degree must lie in 1..={MAX_QUADRATURE_DEGREE}, got {}", self.quad_degree);
        }
        if matches!(self.command, Command::Solve | Command::Stability) && self.dt.is_none() {
            bail!("missing required field `dt` (pass --dt or set dt in [time])");
        }
        Ok(())
    }

    /// `(Δt, N)` of a single-mesh run.
    pub fn time_grid(&self) -> Result<(f64, usize)> {
        let dt = self.dt.context("missing required field `dt`")?;
        let n_steps = match self.n_steps {
            Some(n) => n,
            None => step_count(self.t_final, dt)?,
        };
        Ok((dt, n_steps))
    }

    /// Cells per side of each sweep level.
    pub fn sweep_sizes(&self) -> Vec<usize> {
        (0..self.levels).map(|k| self.base_n << k).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("a resolved config always serializes")
    }
}
