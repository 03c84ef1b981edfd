//! Frozen-policy simulation: running a controller without learning.

use rand::Rng;

use crate::env::{EnvError, Environment};
use crate::graph::PolicyGraph;
use crate::math::{discount_power, sqrt};

/// Anything that picks actions from an observation stream.
pub trait Controller {
    /// Starts a trial at the first observation.
    fn begin<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R);
    fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize;
    /// Feeds the observation that followed the last action.
    fn observe<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R);
}

/// A policy graph being executed: the graph plus its current node.
#[derive(Clone, Debug)]
pub struct GraphRunner<'a> {
    graph: &'a PolicyGraph,
    node: usize,
}

impl<'a> GraphRunner<'a> {
    pub fn new(graph: &'a PolicyGraph) -> Self {
        Self { graph, node: 0 }
    }

    pub fn node(&self) -> usize {
        self.node
    }
}

impl Controller for GraphRunner<'_> {
    fn begin<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R) {
        self.node = self.graph.sample_initial_node(obs, rng);
    }

    fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.graph.sample_action(self.node, rng)
    }

    fn observe<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R) {
        self.node = self.graph.sample_next_node(self.node, obs, rng);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Episode {
    /// Control decisions taken.
    pub steps: u64,
    pub total_return: f64,
    pub discounted_return: f64,
    /// Ended by the environment rather than by the step cap.
    pub terminal: bool,
}

/// Runs one trial until the environment terminates or `max_steps` decisions.
pub fn run_episode<E, C, R>(
    env: &E,
    controller: &mut C,
    gamma: f64,
    max_steps: u64,
    rng: &mut R,
) -> Result<Episode, EnvError>
where
    E: Environment,
    C: Controller,
    R: Rng + ?Sized,
{
    let (mut state, obs) = env.reset(rng);
    controller.begin(obs, rng);
    let mut ep = Episode::default();
    while ep.steps < max_steps {
        let action = controller.act(rng);
        let tr = env.step(&state, action, rng)?;
        ep.total_return += tr.reward;
        ep.discounted_return += discount_power(gamma, ep.steps as usize) * tr.reward;
        ep.steps += 1;
        if tr.terminal {
            ep.terminal = true;
            break;
        }
        state = tr.state;
        controller.observe(tr.obs, rng);
    }
    Ok(ep)
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: u64,
}

impl MeanEstimate {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        // Welford.
        let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
        for x in samples {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let std_err = if n > 1 {
            sqrt(m2 / (n - 1) as f64 / n as f64)
        } else {
            0.0
        };
        Self { mean, std_err, n }
    }
}

/// Mean trial length (in control decisions) over `n_trials` frozen-policy trials.
pub fn mean_trial_length<E, C, R>(
    env: &E,
    controller: &mut C,
    n_trials: u64,
    max_steps: u64,
    rng: &mut R,
) -> Result<MeanEstimate, EnvError>
where
    E: Environment,
    C: Controller,
    R: Rng + ?Sized,
{
    let mut lengths = alloc::vec::Vec::with_capacity(n_trials as usize);
    for _ in 0..n_trials {
        lengths.push(run_episode(env, controller, 1.0, max_steps, rng)?.steps as f64);
    }
    Ok(MeanEstimate::from_samples(lengths))
}

/// Monte Carlo estimate of the expected discounted return, truncated at `horizon`.
pub fn mean_discounted_return<E, C, R>(
    env: &E,
    controller: &mut C,
    gamma: f64,
    n_trials: u64,
    horizon: u64,
    rng: &mut R,
) -> Result<MeanEstimate, EnvError>
where
    E: Environment,
    C: Controller,
    R: Rng + ?Sized,
{
    let mut returns = alloc::vec::Vec::with_capacity(n_trials as usize);
    for _ in 0..n_trials {
        returns.push(run_episode(env, controller, gamma, horizon, rng)?.discounted_return);
    }
    Ok(MeanEstimate::from_samples(returns))
}
