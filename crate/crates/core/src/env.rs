//! Environment abstraction shared by tabular models and the cart-pole.

use rand::Rng;
use thiserror::Error;

use crate::cartpole::CartPoleState;

/// Internal state of an environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvState {
    Tabular(usize),
    CartPole(CartPoleState),
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub reward: f64,
    pub obs: usize,
    pub terminal: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range (environment has {n_actions} actions)")]
    InvalidAction { action: usize, n_actions: usize },
    #[error("state does not belong to this environment")]
    ForeignState,
}

/// A simulator emitting discrete observations and accepting discrete actions.
///
/// Implementations hold no mutable state; all randomness comes from the
/// caller's generator.
pub trait Environment {
    fn n_obs(&self) -> usize;
    fn n_actions(&self) -> usize;

    /// Samples an initial state and its first observation.
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, usize);

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError>;
}

impl<E: Environment + ?Sized> Environment for &E {
    fn n_obs(&self) -> usize {
        (**self).n_obs()
    }

    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, usize) {
        (**self).reset(rng)
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        (**self).step(state, action, rng)
    }
}
