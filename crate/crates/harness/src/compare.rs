//! Exact-gradient versus stochastic-gradient timing across discount factors.
//!
//! For each discount in the grid, both methods learn a graph on the same
//! tabular model until its exact value reaches a fixed fraction of the
//! fully observable optimum. The time to get there is recorded per seed;
//! runs that never get there are censored, never extrapolated. Jobs run
//! one at a time so wall-clock ticks are not distorted by contention.

use std::path::{Path, PathBuf};

use fsc_core::curve::LearnCurve;
use fsc_core::exact::{exact_gradient_descent_with, exact_value, mdp_optimal_value, ExactError};
use fsc_core::graph::PolicyGraph;
use fsc_core::learner::{train_with, LearnError, LearnerConfig};
use fsc_core::pomdp::TabularPomdp;
use fsc_core::seed::derive_seed;
use serde::{Deserialize, Serialize};

use crate::clock::{ClockKind, RunClock};
use crate::envs::EnvSpec;
use crate::io::{create_dir, read_json, write_json};
use crate::spec::{ExactSettings, ALPHA_SWEEP};
use crate::HarnessError;

fn default_threshold() -> f64 {
    0.9
}

fn default_nodes() -> usize {
    2
}

fn default_theta() -> f64 {
    1.0
}

fn default_wall() -> ClockKind {
    ClockKind::Wall
}

fn default_eval_every() -> u64 {
    100
}

fn default_stochastic_seeds() -> u64 {
    5
}

fn default_exact_seeds() -> u64 {
    3
}

fn default_h() -> f64 {
    1e-4
}

fn default_jitter() -> f64 {
    0.05
}

fn default_tol() -> Option<f64> {
    Some(1e-8)
}

fn default_patience() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticArm {
    pub alpha: f64,
    pub n_trials: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_stochastic_seeds")]
    pub n_seeds: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactArm {
    pub alpha: f64,
    pub n_iters: u64,
    #[serde(default = "default_exact_seeds")]
    pub n_seeds: u64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_tol")]
    pub tol: Option<f64>,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl ExactArm {
    fn settings(&self) -> ExactSettings {
        ExactSettings {
            h: self.h,
            jitter: self.jitter,
            tol: self.tol,
            patience: self.patience,
        }
    }
}

/// `fsc compare` configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub environment: EnvSpec,
    pub gammas: Vec<f64>,
    /// Fraction of the fully observable optimum that counts as reached.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub stochastic: StochasticArm,
    pub exact: ExactArm,
    #[serde(default)]
    pub alpha_sweep: bool,
    #[serde(default = "default_wall")]
    pub clock: ClockKind,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CompareSpec {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut spec: Self = read_json(path)?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.output = spec.base_dir.join(&spec.output);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !self.environment.is_tabular() {
            return Err(HarnessError::spec("environment", "comparison needs a tabular model"));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
            return Err(HarnessError::spec("gammas", "need at least one discount, each in [0, 1)"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(HarnessError::spec("threshold", "must lie in (0, 1]"));
        }
        if self.n_nodes == 0 || !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(HarnessError::spec("n_nodes", "need at least one node and a positive theta"));
        }
        if self.stochastic.n_seeds == 0 || self.exact.n_seeds == 0 {
            return Err(HarnessError::spec("n_seeds", "each arm needs at least one seed"));
        }
        if self.stochastic.eval_every == 0 {
            return Err(HarnessError::spec("stochastic.eval_every", "must be at least 1"));
        }
        Ok(())
    }

    fn alphas(&self, base: f64) -> Vec<f64> {
        if self.alpha_sweep {
            ALPHA_SWEEP.iter().map(|m| m * base).collect()
        } else {
            vec![base]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Stochastic,
}

/// First evaluation point at or above the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reach {
    pub trial: u64,
    pub ticks: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub gamma: f64,
    pub method: Method,
    pub alpha: f64,
    pub seed: u64,
    /// `None` when censored.
    pub reached: Option<Reach>,
    pub final_performance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub alpha: f64,
    /// Median ticks to threshold over seeds; `None` if the median run is censored.
    pub median_ticks: Option<u64>,
    pub reached: usize,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub optimal_value: f64,
    pub threshold_value: f64,
    pub exact: MethodSummary,
    pub stochastic: MethodSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub clock: ClockKind,
    pub threshold: f64,
    pub rows: Vec<GammaRow>,
    /// Median time at the last discount over the first, per method.
    pub exact_ratio: Option<f64>,
    pub stochastic_ratio: Option<f64>,
    /// Whether the exact method's time grows faster; `None` if either ratio is censored.
    pub exact_grows_faster: Option<bool>,
    pub attempts: Vec<Attempt>,
}

/// Upper median with censored runs ordered last.
pub fn censored_median(times: &[Option<u64>]) -> Option<u64> {
    if times.is_empty() {
        return None;
    }
    let mut sorted: Vec<u64> = times.iter().map(|t| t.unwrap_or(u64::MAX)).collect();
    sorted.sort_unstable();
    let m = sorted[sorted.len() / 2];
    (m != u64::MAX).then_some(m)
}

fn reach(curve: &LearnCurve, target: f64) -> Option<Reach> {
    curve.first_reaching(target).map(|p| Reach {
        trial: p.trial,
        ticks: p.ticks,
    })
}

fn stochastic_attempt(
    spec: &CompareSpec,
    model: &TabularPomdp,
    alpha: f64,
    seed: u64,
    target: f64,
) -> Result<Attempt, HarnessError> {
    let gamma = model.gamma();
    let mut graph = PolicyGraph::uniform(spec.n_nodes, model.n_obs(), model.n_actions()).with_theta(spec.theta)?;
    let mut config = LearnerConfig::maintenance(alpha, gamma, spec.stochastic.n_trials);
    config.eval_every = spec.stochastic.eval_every;
    config.seed = seed;
    config.target = Some(target);
    let mut clock = RunClock::new(spec.clock);
    let curve = train_with(
        model,
        &mut graph,
        &config,
        &mut clock,
        |g, _| {
            exact_value(model, g)
                .map(|v| v.v0)
                .map_err(|e| LearnError::Hook(e.to_string()))
        },
        |_| Ok(()),
    )?;
    Ok(Attempt {
        gamma,
        method: Method::Stochastic,
        alpha,
        seed,
        reached: reach(&curve, target),
        final_performance: curve.last().map_or(f64::NAN, |p| p.performance),
        note: None,
    })
}

fn exact_attempt(
    spec: &CompareSpec,
    model: &TabularPomdp,
    alpha: f64,
    seed: u64,
    target: f64,
) -> Result<Attempt, HarnessError> {
    let mut graph = PolicyGraph::uniform(spec.n_nodes, model.n_obs(), model.n_actions()).with_theta(spec.theta)?;
    let config = spec
        .exact
        .settings()
        .descent_config(alpha, spec.exact.n_iters, seed, Some(target));
    let mut clock = RunClock::new(spec.clock);
    let mut last = f64::NAN;
    let outcome = exact_gradient_descent_with(model, &mut graph, &config, &mut clock, |p| {
        last = p.performance;
        Ok(())
    });
    let (reached, note) = match outcome {
        Ok(curve) => (reach(&curve, target), None),
        // A diverging step size is a censored run, not a failed comparison.
        Err(e @ ExactError::Diverged { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(Attempt {
        gamma: model.gamma(),
        method: Method::Exact,
        alpha,
        seed,
        reached,
        final_performance: last,
        note,
    })
}

/// Picks the step size with the smallest median time (then the most successes).
fn summarize(attempts: &[Attempt], alphas: &[f64]) -> MethodSummary {
    let mut best: Option<MethodSummary> = None;
    for &alpha in alphas {
        let times: Vec<Option<u64>> = attempts
            .iter()
            .filter(|a| a.alpha == alpha)
            .map(|a| a.reached.map(|r| r.ticks))
            .collect();
        let s = MethodSummary {
            alpha,
            median_ticks: censored_median(&times),
            reached: times.iter().flatten().count(),
            runs: times.len(),
        };
        let key = |m: &MethodSummary| (m.median_ticks.unwrap_or(u64::MAX), std::cmp::Reverse(m.reached));
        if best.as_ref().is_none_or(|b| key(&s) < key(b)) {
            best = Some(s);
        }
    }
    best.expect("at least one step size")
}

/// Runs both methods over the discount grid and writes `compare.csv` and `report.json`.
pub fn cmd_compare(spec: &CompareSpec) -> Result<CompareReport, HarnessError> {
    spec.validate()?;
    create_dir(&spec.output)?;
    let exact_alphas = spec.alphas(spec.exact.alpha);
    let stochastic_alphas = spec.alphas(spec.stochastic.alpha);
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &gamma in &spec.gammas {
        let model = spec
            .environment
            .build(Some(gamma), &spec.base_dir)?
            .tabular()
            .cloned()
            .expect("validated as tabular");
        let optimal = mdp_optimal_value(&model);
        let target = spec.threshold * optimal;
        let mut exact = Vec::new();
        for &alpha in &exact_alphas {
            for run in 0..spec.exact.n_seeds {
                exact.push(exact_attempt(spec, &model, alpha, derive_seed(spec.seed, run), target)?);
            }
        }
        let mut stochastic = Vec::new();
        for &alpha in &stochastic_alphas {
            for run in 0..spec.stochastic.n_seeds {
                stochastic.push(stochastic_attempt(spec, &model, alpha, derive_seed(spec.seed, run), target)?);
            }
        }
        rows.push(GammaRow {
            gamma,
            optimal_value: optimal,
            threshold_value: target,
            exact: summarize(&exact, &exact_alphas),
            stochastic: summarize(&stochastic, &stochastic_alphas),
        });
        all.extend(exact);
        all.extend(stochastic);
    }
    let ratio = |pick: fn(&GammaRow) -> &MethodSummary| {
        let first = pick(rows.first()?).median_ticks?;
        let last = pick(rows.last()?).median_ticks?;
        Some(last as f64 / first.max(1) as f64)
    };
    let exact_ratio = ratio(|r| &r.exact);
    let stochastic_ratio = ratio(|r| &r.stochastic);
    let report = CompareReport {
        clock: spec.clock,
        threshold: spec.threshold,
        exact_grows_faster: exact_ratio.zip(stochastic_ratio).map(|(e, s)| e > s),
        exact_ratio,
        stochastic_ratio,
        rows,
        attempts: all,
    };
    write_attempts(&spec.output.join("compare.csv"), &report.attempts)?;
    write_json(&spec.output.join("report.json"), &report)?;
    Ok(report)
}

fn write_attempts(path: &Path, attempts: &[Attempt]) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["gamma", "method", "alpha", "seed", "reached", "trial", "ticks", "final_performance"])
        .map_err(csv_err)?;
    for a in attempts {
        let method = match a.method {
            Method::Exact => "exact",
            Method::Stochastic => "stochastic",
        };
        let (reached, trial, ticks) = match a.reached {
            Some(r) => ("true", r.trial.to_string(), r.ticks.to_string()),
            None => ("false", String::new(), String::new()),
        };
        w.write_record([
            a.gamma.to_string(),
            method.to_string(),
            a.alpha.to_string(),
            a.seed.to_string(),
            reached.to_string(),
            trial,
            ticks,
            a.final_performance.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}
