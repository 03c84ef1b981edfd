//! Tabular SARSA over observation-action values with Boltzmann exploration.
//!
//! Serves as a value-based baseline: it treats the current observation as
//! if it were the state.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{Clock, CurvePoint, LearnCurve};
use crate::env::Environment;
use crate::learner::LearnError;
use crate::math::sample_softmax;
use crate::rollout::Controller;

fn default_theta() -> f64 {
    1.0
}

fn default_eval_every() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarsaConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Boltzmann temperature.
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub n_trials: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub seed: u64,
    pub max_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Starting value of every table entry. Values at or above the best
    /// achievable return make the agent try every action before settling.
    #[serde(default)]
    pub initial_q: f64,
}

impl SarsaConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(LearnError::Config("alpha must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(LearnError::Config("gamma must lie in [0, 1]"));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(LearnError::Config("theta must be finite and positive"));
        }
        if !self.initial_q.is_finite() {
            return Err(LearnError::Config("initial_q must be finite"));
        }
        if self.eval_every == 0 || self.max_steps == 0 {
            return Err(LearnError::Config("eval_every and max_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SarsaAgent {
    n_obs: usize,
    n_actions: usize,
    theta: f64,
    q: Vec<f64>,
}

impl SarsaAgent {
    /// All values start equal, so the initial policy is uniform.
    pub fn new(n_obs: usize, n_actions: usize, theta: f64, initial_q: f64) -> Self {
        Self {
            n_obs,
            n_actions,
            theta,
            q: vec![initial_q; n_obs * n_actions],
        }
    }

    pub fn from_config(n_obs: usize, n_actions: usize, config: &SarsaConfig) -> Self {
        Self::new(n_obs, n_actions, config.theta, config.initial_q)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q(&self, obs: usize, action: usize) -> f64 {
        self.q[obs * self.n_actions + action]
    }

    pub fn set_q(&mut self, obs: usize, action: usize, value: f64) {
        self.q[obs * self.n_actions + action] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: usize, rng: &mut R) -> usize {
        sample_softmax(&self.q[obs * self.n_actions..(obs + 1) * self.n_actions], self.theta, rng)
    }

    /// `Q(o,a) += alpha (r + gamma Q(o',a') - Q(o,a))`, with target `r` when
    /// `next` is `None` (the trial ended).
    pub fn update(&mut self, obs: usize, action: usize, reward: f64, next: Option<(usize, usize)>, alpha: f64, gamma: f64) {
        let target = reward + next.map_or(0.0, |(o, a)| gamma * self.q(o, a));
        let i = obs * self.n_actions + action;
        self.q[i] += alpha * (target - self.q[i]);
    }

    /// Frozen Boltzmann policy view for evaluation.
    pub fn policy(&self) -> SarsaPolicy<'_> {
        SarsaPolicy { agent: self, obs: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct SarsaPolicy<'a> {
    agent: &'a SarsaAgent,
    obs: usize,
}

impl Controller for SarsaPolicy<'_> {
    fn begin<R: Rng + ?Sized>(&mut self, obs: usize, _rng: &mut R) {
        self.obs = obs;
    }

    fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.agent.sample_action(self.obs, rng)
    }

    fn observe<R: Rng + ?Sized>(&mut self, obs: usize, _rng: &mut R) {
        self.obs = obs;
    }
}

/// Runs one on-policy trial, updating after every transition. Returns the step count.
pub fn sarsa_trial<E: Environment, R: Rng + ?Sized>(
    env: &E,
    agent: &mut SarsaAgent,
    config: &SarsaConfig,
    rng: &mut R,
) -> Result<u64, LearnError> {
    let (mut state, mut obs) = env.reset(rng);
    let mut action = agent.sample_action(obs, rng);
    let mut steps = 0;
    loop {
        let tr = env.step(&state, action, rng)?;
        steps += 1;
        if tr.terminal {
            agent.update(obs, action, tr.reward, None, config.alpha, config.gamma);
            return Ok(steps);
        }
        let next_action = agent.sample_action(tr.obs, rng);
        agent.update(obs, action, tr.reward, Some((tr.obs, next_action)), config.alpha, config.gamma);
        if steps >= config.max_steps {
            return Ok(steps);
        }
        state = tr.state;
        obs = tr.obs;
        action = next_action;
    }
}

/// Trains `agent` for `config.n_trials` trials, evaluating like the policy learner.
pub fn train_sarsa<E, C, F, P>(
    env: &E,
    agent: &mut SarsaAgent,
    config: &SarsaConfig,
    clock: &mut C,
    mut evaluate: F,
    mut on_point: P,
) -> Result<LearnCurve, LearnError>
where
    E: Environment,
    C: Clock + ?Sized,
    F: FnMut(&SarsaAgent, u64) -> Result<f64, LearnError>,
    P: FnMut(&CurvePoint) -> Result<(), LearnError>,
{
    config.validate()?;
    if env.n_obs() != agent.n_obs || env.n_actions() != agent.n_actions {
        return Err(LearnError::Config("agent table does not match the environment"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = LearnCurve::new();
    let mut work = 0;
    let mut record = |agent: &SarsaAgent, trial: u64, work: u64, curve: &mut LearnCurve, clock: &mut C| {
        clock.pause();
        let ticks = clock.ticks(work);
        let performance = evaluate(agent, trial)?;
        let point = CurvePoint {
            trial,
            ticks,
            performance,
            gamma: config.gamma,
            alpha: config.alpha,
            seed: config.seed,
        };
        on_point(&point)?;
        curve.push(point);
        clock.resume();
        Ok::<bool, LearnError>(config.target.is_some_and(|t| performance >= t))
    };
    if !record(agent, 0, 0, &mut curve, clock)? {
        for trial in 0..config.n_trials {
            work += sarsa_trial(env, agent, config, &mut rng)?;
            let done = trial + 1;
            if (done % config.eval_every == 0 || done == config.n_trials)
                && record(agent, done, work, &mut curve, clock)?
            {
                break;
            }
        }
    }
    clock.pause();
    Ok(curve)
}
