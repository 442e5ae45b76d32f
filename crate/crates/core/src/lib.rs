//! Finite-volume approximation of the marginal densities of one-dimensional
//! piecewise deterministic Markov processes with boundary, with a Monte-Carlo
//! reference simulator and consistency diagnostics.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod error;
pub mod measures;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod solver;

pub use coefficients::{
    compute_coefficients, verify_balance, BalanceReport, CoefficientSet, QuadratureRule,
    QuadratureSpec,
};
pub use error::{Error, Result};
pub use measures::{kolmogorov_residual, DiscreteMeasures, TestFunction};
pub use mesh::{Location, Mesh1D};
pub use model::{
    audit_hypotheses, build_tcp_model, DomainSpec, HypothesisReport, InitialLaw, MixtureKernel,
    PdmpModel, TcpVariant,
};
pub use oracle::{estimate_density, estimate_sigma_mass, Histogram, McConfig};
pub use solver::{
    init_density, run_stationary, run_transient, DensityState, ImplicitSolver, SchemeParams,
    SolverMethod,
};
