//! Monte-Carlo policy engine: pathwise (Malliavin) building blocks, utility
//! weights, multiplier solving, the five-channel policy estimator, and the
//! backward grid solver for the unspanned price of risk.

pub mod blocks;
pub mod diagnostics;
pub mod engine;
pub mod field;
pub mod solver;

pub use blocks::{advance_blocks, BlockState};
pub use diagnostics::{deterministic_rate_check, residual_diagnostics, DiagnosticsReport};
pub use engine::{
    crra_tilt, gamma_upsilon, mc_policy_components, simulate_functionals, solve_lambda,
    GammaUpsilon, McComponents, McConfig, PathFunctionals,
};
pub use field::{ClosedFormHestonThetaU, ThetaUField, ThetaUSource, ZeroThetaU, D};
pub use solver::{node_estimate, solve_theta_u, SolvedField, SolverConfig};
