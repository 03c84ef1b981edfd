//! Experiment driver for finite-state controller learning: configuration
//! files, per-seed learning runs with CSV curves, frozen-policy evaluation,
//! exact-versus-stochastic timing comparisons and gradient checks.

pub mod clock;
pub mod compare;
pub mod envs;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod spec;
pub mod train;

pub use error::HarnessError;
