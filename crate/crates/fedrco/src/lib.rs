//! Deterministic federated-learning simulator built around a robust
//! second-order client optimizer.
//!
//! The crate is organized along the pipeline: dense linear algebra
//! ([`numerics`]), a small feed-forward model with exact backprop and factor
//! capture ([`model`]), Kronecker-factored curvature ([`kfac`]), the gradient
//! anomaly monitor and resilience protocol ([`stability`]), the round loop and
//! aggregation ([`federation`]), first-order baselines ([`baselines`]), data
//! synthesis and partitioning ([`data`]), executable stability/convergence
//! audits ([`diagnostics`]), and the experiment harness ([`harness`]).

pub mod baselines;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod federation;
pub mod harness;
pub mod kfac;
pub mod model;
pub mod numerics;
pub mod seeding;
pub mod stability;

pub use error::{Error, Result};
pub use numerics::Matrix;

/// CLI entry point; returns the process exit code.
pub fn run_cli() -> i32 {
    cli::run()
}
