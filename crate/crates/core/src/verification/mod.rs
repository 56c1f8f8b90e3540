//! Manufactured solutions, stability budgets and convergence studies.

pub mod convergence;
pub mod manufactured;
pub mod stability;
pub mod sweeps;

pub use convergence::{convergence_study, Coupling, ConvergenceStudy, ConvergenceTable, StudyConfig};
pub use manufactured::{manufactured_solution, ManufacturedSolution, SolutionKind};
pub use stability::{stability_report, StabilityReport};
