//! Environment selection by configuration.

use std::path::{Path, PathBuf};

use fsc_core::cartpole::{CartPoleEnv, CartPoleParams, Observability, PartitionSpec};
use fsc_core::env::{EnvError, EnvState, Environment, Transition};
use fsc_core::pomdp::{make_load_unload, TabularPomdp};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io::load_model;
use crate::HarnessError;

fn default_locations() -> usize {
    5
}

/// Environment section of a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    LoadUnload {
        #[serde(default = "default_locations")]
        locations: usize,
    },
    CartPole {
        observability: Observability,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        partitions: Option<PartitionSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<CartPoleParams>,
        #[serde(default)]
        start_jitter: f64,
    },
    /// Tabular model read from a JSON file, relative to the config file.
    Model { path: PathBuf },
}

impl EnvSpec {
    pub fn is_tabular(&self) -> bool {
        !matches!(self, Self::CartPole { .. })
    }

    /// Builds the environment. Tabular models take their discount from
    /// `gamma` when given, otherwise keep their own.
    pub fn build(&self, gamma: Option<f64>, base_dir: &Path) -> Result<Env, HarnessError> {
        let discount = |m: TabularPomdp| match gamma {
            Some(g) => m.with_gamma(g),
            None => Ok(m),
        };
        Ok(match self {
            Self::LoadUnload { locations } => Env::Tabular(discount(make_load_unload(*locations)?)?),
            Self::Model { path } => Env::Tabular(discount(load_model(&base_dir.join(path))?)?),
            Self::CartPole {
                observability,
                partitions,
                params,
                start_jitter,
            } => {
                if !(start_jitter.is_finite() && *start_jitter >= 0.0) {
                    return Err(HarnessError::spec(
                        "environment.start_jitter",
                        "must be finite and non-negative",
                    ));
                }
                let env = CartPoleEnv::new(params.unwrap_or_default(), *observability, partitions.clone())?;
                Env::CartPole(env.with_start_jitter(*start_jitter))
            }
        })
    }
}

/// A built environment.
#[derive(Clone, Debug)]
pub enum Env {
    Tabular(TabularPomdp),
    CartPole(CartPoleEnv),
}

impl Env {
    pub fn tabular(&self) -> Option<&TabularPomdp> {
        match self {
            Self::Tabular(m) => Some(m),
            Self::CartPole(_) => None,
        }
    }
}

impl Environment for Env {
    fn n_obs(&self) -> usize {
        match self {
            Self::Tabular(m) => m.n_obs(),
            Self::CartPole(c) => c.n_obs(),
        }
    }

    fn n_actions(&self) -> usize {
        match self {
            Self::Tabular(m) => m.n_actions(),
            Self::CartPole(c) => c.n_actions(),
        }
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, usize) {
        match self {
            Self::Tabular(m) => m.reset(rng),
            Self::CartPole(c) => c.reset(rng),
        }
    }

    fn step<R: Rng + ?Sized>(&self, state: &EnvState, action: usize, rng: &mut R) -> Result<Transition, EnvError> {
        match self {
            Self::Tabular(m) => m.step(state, action, rng),
            Self::CartPole(c) => c.step(state, action, rng),
        }
    }
}
