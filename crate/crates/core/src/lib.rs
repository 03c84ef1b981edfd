//! Finite-state policy graphs for partially observable control, learned by
//! stochastic gradient descent on the expected return.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and experiment drivers live in the `fsc-harness` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cartpole;
pub mod curve;
pub mod env;
pub mod exact;
pub mod graph;
pub mod learner;
mod linalg;
mod math;
pub mod pomdp;
pub mod rollout;
pub mod sarsa;
pub mod seed;
#[cfg(test)]
mod testing;

pub use math::discount_power;
