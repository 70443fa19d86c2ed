//! Stochastic cubic Newton with momentum-stabilized gradient and Hessian
//! estimates.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense vectors, symmetric matrices, symmetric eigensolver.
//! - [`dataio`]: SVMlight/LibSVM parsing and synthetic classification data.
//! - [`problems`]: finite-sum objectives with per-sample derivatives.
//! - [`cubic`]: exact solver for the cubically regularized model step.
//! - [`estimators`]: momentum estimators and parameter schedules.
//! - [`engine`]: the optimization loop, baselines, traces and the one-step
//!   progress checker.
//! - [`checks`]: randomized property suites shared by tests and the CLI.

pub mod checks;
pub mod cubic;
pub mod dataio;
pub mod engine;
pub mod estimators;
pub mod numkit;
pub mod problems;

pub use numkit::{SymMatrix, Vector};
