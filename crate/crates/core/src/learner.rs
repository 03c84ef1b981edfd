//! Trial-based stochastic gradient descent on policy-graph weights.
//!
//! Each trial runs the graph with frozen weights and keeps two eligibility
//! traces per weight: `T^psi`, the running sum of `d ln psi(n^j, a^j)`, and
//! `T^eta`, the running sum of `d ln eta(n^{j-1}, o^j, n^j)` (with `eta0`
//! standing in at `j = 0`). After step `t` the immediate error `e(s_t)`
//! contributes `-alpha * e(s_t) * (T^psi + T^eta)` to the weight change;
//! the summed change is applied once the trial is over.
//!
//! Both supported errors (`-gamma^t r^t` and `-r^t`) have zero partial
//! derivative with respect to every weight, so that term is dropped.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{Clock, CurvePoint, LearnCurve, WorkClock};
use crate::env::{EnvError, Environment};
use crate::graph::{Coord, GraphError, PolicyGraph};
use crate::math::discount_power;

/// Default hard step cap for tabular environments.
pub const TABULAR_STEP_CAP: u64 = 1_000_000;
/// Default hard step cap for cart-pole trials.
pub const CART_POLE_STEP_CAP: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("invalid learner config: {0}")]
    Config(&'static str),
    #[error(
        "graph expects {graph_obs} observations and {graph_actions} actions, \
         environment has {env_obs} and {env_actions}"
    )]
    Shape {
        graph_obs: usize,
        graph_actions: usize,
        env_obs: usize,
        env_actions: usize,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("weight {coord:?} became non-finite after trial {trial}")]
    NonFinite { trial: u64, coord: Coord },
    #[error("{0}")]
    Hook(String),
}

/// Immediate error attached to each trajectory prefix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    /// `e(s_t) = -gamma^t r^t`.
    #[default]
    #[serde(rename = "e_policy")]
    Policy,
    /// `e(s_t) = -r^t`, for maintenance tasks ended with probability
    /// `1 - gamma` per step.
    #[serde(rename = "e_policy_prime")]
    PolicyPrime,
}

/// How a trial ends (besides the environment's own terminal signal).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Run until the environment signals termination; hitting the hard cap
    /// marks the trial as truncated.
    GoalObs,
    /// After each step's reward, end the trial with probability `1 - gamma`.
    Geometric,
    /// End after at most this many steps.
    StepCap(u64),
}

/// Linear discount schedule: `min(start + trial * increment, cap)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub start: f64,
    pub increment: f64,
    pub cap: f64,
}

impl GammaSchedule {
    pub fn at(&self, trial: u64) -> f64 {
        (self.start + trial as f64 * self.increment).min(self.cap)
    }
}

fn default_max_steps() -> u64 {
    TABULAR_STEP_CAP
}

fn default_eval_every() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub error_kind: ErrorKind,
    pub termination: Termination,
    pub n_trials: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_schedule: Option<GammaSchedule>,
    /// Hard cap on trial length, whatever the termination mode.
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// Stop training at the first evaluation reaching this performance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl LearnerConfig {
    /// Discounted maintenance task: geometric termination with `-r^t` error.
    pub fn maintenance(alpha: f64, gamma: f64, n_trials: u64) -> Self {
        Self {
            alpha,
            gamma,
            error_kind: ErrorKind::PolicyPrime,
            termination: Termination::Geometric,
            n_trials,
            eval_every: default_eval_every(),
            seed: 0,
            gamma_schedule: None,
            max_steps: TABULAR_STEP_CAP,
            target: None,
        }
    }

    /// Episodic task run to the environment's terminal signal, `-gamma^t r^t` error.
    pub fn episodic(alpha: f64, gamma: f64, n_trials: u64) -> Self {
        Self {
            error_kind: ErrorKind::Policy,
            termination: Termination::GoalObs,
            ..Self::maintenance(alpha, gamma, n_trials)
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(LearnError::Config("alpha must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(LearnError::Config("gamma must lie in [0, 1)"));
        }
        if let Some(s) = &self.gamma_schedule {
            let ok = (0.0..1.0).contains(&s.start)
                && (0.0..1.0).contains(&s.cap)
                && s.increment.is_finite()
                && s.increment >= 0.0;
            if !ok {
                return Err(LearnError::Config(
                    "gamma schedule needs start and cap in [0, 1) and a non-negative increment",
                ));
            }
        }
        if self.error_kind == ErrorKind::PolicyPrime && self.termination != Termination::Geometric {
            return Err(LearnError::Config(
                "the undiscounted e_policy_prime error requires geometric termination",
            ));
        }
        if self.eval_every == 0 {
            return Err(LearnError::Config("eval_every must be at least 1"));
        }
        if self.max_steps == 0 {
            return Err(LearnError::Config("max_steps must be at least 1"));
        }
        if let Termination::StepCap(0) = self.termination {
            return Err(LearnError::Config("step cap must be at least 1"));
        }
        Ok(())
    }

    /// Discount in force during trial `trial` (0-based).
    pub fn gamma_at(&self, trial: u64) -> f64 {
        self.gamma_schedule.map_or(self.gamma, |s| s.at(trial))
    }
}

/// One time step of a trajectory: `(o^t, n^t, a^t, r^t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub obs: usize,
    pub node: usize,
    pub action: usize,
    pub reward: f64,
}

/// Observable-and-internal history `<o^0, n^0, a^0, r^0, ..., o^t, n^t, a^t, r^t>`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryPrefix {
    steps: Vec<Step>,
}

impl TrajectoryPrefix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_steps(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The prefix truncated after time `t` (steps `0..=t`).
    pub fn truncated(&self, t: usize) -> &[Step] {
        &self.steps[..=t]
    }
}

/// `-gamma^t r^t` where `t` is the last index of `prefix`.
pub fn error_policy(prefix: &[Step], gamma: f64) -> f64 {
    match prefix.last() {
        Some(last) => -(discount_power(gamma, prefix.len() - 1) * last.reward),
        None => 0.0,
    }
}

/// `-r^t` where `t` is the last index of `prefix`.
pub fn error_policy_prime(prefix: &[Step]) -> f64 {
    prefix.last().map_or(0.0, |last| -last.reward)
}

/// Per-weight eligibility traces and the accumulated weight change of a trial.
///
/// Vectors are dense over the graph's flat weight layout; only touched
/// entries are reset between trials.
#[derive(Clone, Debug)]
pub struct TraceSet {
    trace_psi: Vec<f64>,
    trace_eta: Vec<f64>,
    delta_acc: Vec<f64>,
    // sum_j E_{j-1} * g_j, with E the running error sum; lets the per-step
    // weight change be folded into one pass at the end of the trial.
    lagged: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
    error_sum: f64,
}

impl TraceSet {
    pub fn new(n_weights: usize) -> Self {
        Self {
            trace_psi: vec![0.0; n_weights],
            trace_eta: vec![0.0; n_weights],
            delta_acc: vec![0.0; n_weights],
            lagged: vec![0.0; n_weights],
            touched: Vec::new(),
            mark: vec![false; n_weights],
            error_sum: 0.0,
        }
    }

    /// `T^psi_k` at the end of the trial.
    pub fn trace_psi(&self) -> &[f64] {
        &self.trace_psi
    }

    /// `T^eta_k` at the end of the trial.
    pub fn trace_eta(&self) -> &[f64] {
        &self.trace_eta
    }

    /// `sum_t Delta w_k(t)` over the trial.
    pub fn delta_acc(&self) -> &[f64] {
        &self.delta_acc
    }

    /// Indices with possibly non-zero entries.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    /// Sum of the immediate errors over the trial.
    pub fn error_sum(&self) -> f64 {
        self.error_sum
    }

    pub fn reset(&mut self) {
        for &i in &self.touched {
            self.trace_psi[i] = 0.0;
            self.trace_eta[i] = 0.0;
            self.delta_acc[i] = 0.0;
            self.lagged[i] = 0.0;
            self.mark[i] = false;
        }
        self.touched.clear();
        self.error_sum = 0.0;
    }

    #[inline]
    fn touch(&mut self, i: usize) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
    }

    #[inline]
    fn add_psi(&mut self, i: usize, g: f64) {
        self.touch(i);
        self.trace_psi[i] += g;
        self.lagged[i] += self.error_sum * g;
    }

    #[inline]
    fn add_eta(&mut self, i: usize, g: f64) {
        self.touch(i);
        self.trace_eta[i] += g;
        self.lagged[i] += self.error_sum * g;
    }

    #[inline]
    fn add_error(&mut self, e: f64) {
        self.error_sum += e;
    }

    /// `delta_k = -alpha * sum_t e_t (T^psi_k(t) + T^eta_k(t))`
    /// `        = -alpha * (E * (T^psi_k + T^eta_k) - sum_j E_{j-1} g_{j,k})`.
    fn finish(&mut self, alpha: f64) {
        let e = self.error_sum;
        for &i in &self.touched {
            self.delta_acc[i] = -alpha * (e * (self.trace_psi[i] + self.trace_eta[i]) - self.lagged[i]);
        }
    }
}

/// Bookkeeping of one finished trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialSummary {
    pub steps: u64,
    /// `sum_t gamma^t r^t` under `e_policy`, `sum_t r^t` under `e_policy_prime`;
    /// always equal to `-error_sum`.
    pub total_return: f64,
    /// Ended by the environment's terminal signal.
    pub terminal: bool,
    /// Ended by the hard step cap while the termination mode expected more.
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub prefix: TrajectoryPrefix,
    pub traces: TraceSet,
    pub summary: TrialSummary,
}

fn check_shape<E: Environment>(env: &E, graph: &PolicyGraph) -> Result<(), LearnError> {
    if env.n_obs() != graph.n_obs() || env.n_actions() != graph.n_actions() {
        return Err(LearnError::Shape {
            graph_obs: graph.n_obs(),
            graph_actions: graph.n_actions(),
            env_obs: env.n_obs(),
            env_actions: env.n_actions(),
        });
    }
    Ok(())
}

/// Runs one trial under frozen weights and returns its trajectory and traces.
pub fn run_trial<E: Environment, R: Rng + ?Sized>(
    env: &E,
    graph: &PolicyGraph,
    config: &LearnerConfig,
    rng: &mut R,
) -> Result<TrialOutcome, LearnError> {
    config.validate()?;
    check_shape(env, graph)?;
    let mut traces = TraceSet::new(graph.layout().len());
    let mut prefix = TrajectoryPrefix::new();
    let summary = trial_into(env, graph, config, config.gamma, rng, &mut traces, &mut prefix)?;
    Ok(TrialOutcome {
        prefix,
        traces,
        summary,
    })
}

/// Trial loop writing into caller-owned buffers (which it resets first).
pub(crate) fn trial_into<E: Environment, R: Rng + ?Sized>(
    env: &E,
    graph: &PolicyGraph,
    config: &LearnerConfig,
    gamma: f64,
    rng: &mut R,
    traces: &mut TraceSet,
    prefix: &mut TrajectoryPrefix,
) -> Result<TrialSummary, LearnError> {
    traces.reset();
    prefix.clear();

    let (mut state, mut obs) = env.reset(rng);
    let mut node = graph.sample_initial_node(obs, rng);
    graph.for_each_log_grad_initial(obs, node, |i, g| traces.add_eta(i, g));

    let mut total_return = 0.0;
    let mut t: u64 = 0;
    let (terminal, truncated) = loop {
        let action = graph.sample_action(node, rng);
        graph.for_each_log_grad_action(node, action, |i, g| traces.add_psi(i, g));

        let tr = env.step(&state, action, rng)?;
        prefix.push(Step {
            obs,
            node,
            action,
            reward: tr.reward,
        });
        let gain = match config.error_kind {
            ErrorKind::Policy => discount_power(gamma, t as usize) * tr.reward,
            ErrorKind::PolicyPrime => tr.reward,
        };
        total_return += gain;
        traces.add_error(-gain);
        t += 1;

        if tr.terminal {
            break (true, false);
        }
        match config.termination {
            Termination::Geometric => {
                if rng.gen::<f64>() >= gamma {
                    break (false, false);
                }
            }
            Termination::StepCap(cap) if t >= cap => break (false, false),
            _ => {}
        }
        if t >= config.max_steps {
            break (false, true);
        }

        state = tr.state;
        obs = tr.obs;
        let next = graph.sample_next_node(node, obs, rng);
        graph.for_each_log_grad_transition(node, obs, next, |i, g| traces.add_eta(i, g));
        node = next;
    };

    traces.finish(config.alpha);
    Ok(TrialSummary {
        steps: t,
        total_return,
        terminal,
        truncated,
    })
}

/// Trains `graph` in place, evaluating every `eval_every` trials.
///
/// `evaluate(graph, trials_done)` measures performance with frozen
/// weights; `on_point` sees each curve point as soon as it exists. The
/// first point (trial 0) is the initial graph. Ticks come from `clock`,
/// which is paused around evaluation and fed the number of environment
/// steps taken so far.
pub fn train_with<E, C, F, P>(
    env: &E,
    graph: &mut PolicyGraph,
    config: &LearnerConfig,
    clock: &mut C,
    mut evaluate: F,
    mut on_point: P,
) -> Result<LearnCurve, LearnError>
where
    E: Environment,
    C: Clock + ?Sized,
    F: FnMut(&PolicyGraph, u64) -> Result<f64, LearnError>,
    P: FnMut(&CurvePoint) -> Result<(), LearnError>,
{
    config.validate()?;
    check_shape(env, graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut traces = TraceSet::new(graph.layout().len());
    let mut prefix = TrajectoryPrefix::new();
    let mut curve = LearnCurve::new();
    let mut work: u64 = 0;

    let mut record = |graph: &PolicyGraph,
                      trial: u64,
                      gamma: f64,
                      work: u64,
                      curve: &mut LearnCurve,
                      clock: &mut C|
     -> Result<bool, LearnError> {
        clock.pause();
        let ticks = clock.ticks(work);
        let performance = evaluate(graph, trial)?;
        let point = CurvePoint {
            trial,
            ticks,
            performance,
            gamma,
            alpha: config.alpha,
            seed: config.seed,
        };
        on_point(&point)?;
        curve.push(point);
        clock.resume();
        Ok(config.target.is_some_and(|target| performance >= target))
    };

    let stop = record(graph, 0, config.gamma_at(0), 0, &mut curve, clock)?;
    if !stop {
        for trial in 0..config.n_trials {
            let gamma = config.gamma_at(trial);
            let summary = trial_into(env, graph, config, gamma, &mut rng, &mut traces, &mut prefix)?;
            work += summary.steps;
            graph
                .apply_sparse(traces.touched(), traces.delta_acc())
                .map_err(|e| match e {
                    GraphError::NonFinite { coord } => LearnError::NonFinite {
                        trial: trial + 1,
                        coord,
                    },
                    other => LearnError::Hook(alloc::format!("{other}")),
                })?;
            let done = trial + 1;
            if done % config.eval_every == 0 || done == config.n_trials {
                if record(graph, done, gamma, work, &mut curve, clock)? {
                    break;
                }
            }
        }
    }
    clock.pause();
    Ok(curve)
}

/// [`train_with`] measured in environment steps, without a point observer.
pub fn train<E, F>(
    env: &E,
    graph: &mut PolicyGraph,
    config: &LearnerConfig,
    evaluate: F,
) -> Result<LearnCurve, LearnError>
where
    E: Environment,
    F: FnMut(&PolicyGraph, u64) -> Result<f64, LearnError>,
{
    train_with(env, graph, config, &mut WorkClock, evaluate, |_| Ok(()))
}
