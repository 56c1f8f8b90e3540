//! Mixed finite elements for the incompressible Navier-Stokes equations on
//! triangulations of the unit square, with a linearly implicit Backward
//! Euler time stepper and tools that measure the discrete stability
//! constants and convergence rates of the scheme.

pub mod assembly;
pub mod elements;
pub mod error;
pub mod mesh;
pub mod norms;
pub mod solver;
pub mod sparse_linalg;
pub mod verification;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
