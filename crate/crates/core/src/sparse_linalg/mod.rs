//! Direct sparse solves, dense symmetric eigenproblems and kernel bases.

pub mod dense;
pub mod eigen;
pub mod lu;
pub mod nullspace;

pub use dense::DenseMatrix;
pub use eigen::{
    check_dense_cap, dense_cap, sym_generalized_eigs, symmetric_eigenvalues, symmetric_eigs, EigenResult, Which,
    DEFAULT_DENSE_CAP, DENSE_CAP_ENV,
};
pub use lu::{factorize, Factorization, SymbolicFactorization};
pub use nullspace::nullspace_basis;
