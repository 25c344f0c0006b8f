//! Numerical laboratory for backward SDEs whose intensity explodes at the
//! terminal time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod coefficients;
pub mod diagnostics;
pub mod error;
pub mod lipschitz_solver;
pub mod paths;
pub mod quadrature;
pub mod regression;
pub mod singular_scheme;
pub mod solution;
pub mod stats;

pub use coefficients::*;
pub use diagnostics::{
    certify_nonexistence, certify_nonuniqueness, class_d_norm, residual_check, NonUniquenessScenario, PathologyCertificate,
    ResidualReport,
};
pub use error::{Error, Result};
pub use lipschitz_solver::{comparison_check, solve_ode_mode, solve_regression_mc, ClassicalBsde, SolutionEstimate, SolverMode};
pub use paths::{simulate_paths, PathBundle};
pub use regression::RegressionBasis;
pub use singular_scheme::{run_scheme, truncate, SchemeConfig, SchemeMode, SchemeReport, SchemeStatus, TruncatedDriver};
pub use solution::{NodalField, NodalSolution};
