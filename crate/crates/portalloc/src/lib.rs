//! Dynamic portfolio allocation in incomplete markets.
//!
//! The crate has two layers:
//!
//! * closed-form optimal policies for power-type investors (with and without
//!   a subsistence floor on terminal wealth) under a square-root
//!   stochastic-volatility market, plus the batch experiments built on them
//!   (performance statistics, market-cycle studies, hysteresis shuffles);
//! * a generic Monte-Carlo engine that estimates the same policies for any
//!   diffusion market by simulating pathwise-derivative ("Malliavin weight")
//!   building blocks, decomposing the optimal risky weight into
//!   mean-variance, rate-hedge, price-of-risk-hedge and investor-specific
//!   hedge components, and solving the fixed-point equation for the shadow
//!   price of market incompleteness on a grid.
//!
//! The closed forms double as oracles for the generic engine; the test suite
//! cross-validates one against the other.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod experiments;
pub mod malliavin;
pub mod market;
pub mod model;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod utility;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wealth {wealth} is at or below the funded floor {floor}")]
    WealthBelowFloor { wealth: f64, floor: f64 },
    #[error("root bracketing failed: {0}")]
    Bracketing(String),
    #[error("fixed-point sweep did not converge: residual {residual} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Build the global rayon pool, honoring the `ALLOCATOR_THREADS` cap.
/// Safe to call more than once; later calls are no-ops.
pub fn init_threads() {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(s) = std::env::var("ALLOCATOR_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            if n > 0 {
                builder = builder.num_threads(n);
            }
        }
    }
    let _ = builder.build_global();
}
