//! Experiment configuration files.

use std::path::{Path, PathBuf};

use fsc_core::cartpole::Observability;
use fsc_core::exact::{ExactDescentConfig, Solver};
use fsc_core::learner::LearnerConfig;
use fsc_core::sarsa::SarsaConfig;
use serde::{Deserialize, Serialize};

use crate::clock::ClockKind;
use crate::envs::EnvSpec;
use crate::io::read_json;
use crate::HarnessError;

/// Step-size multipliers tried by an alpha sweep, applied to `learner.alpha`.
pub const ALPHA_SWEEP: [f64; 5] = [0.2, 0.1, 0.05, 0.01, 0.005];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Trace-based gradient learning of a graph with free memory nodes.
    #[serde(rename = "VAPS_FSC")]
    VapsFsc,
    /// The same learner on a reactive graph (node = last observation).
    #[serde(rename = "VAPS_RP")]
    VapsRp,
    #[serde(rename = "SARSA")]
    Sarsa,
    /// Gradient ascent on the exactly computed value (tabular models only).
    #[serde(rename = "EXACT_GRAD")]
    ExactGrad,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::VapsFsc => "VAPS_FSC",
            Self::VapsRp => "VAPS_RP",
            Self::Sarsa => "SARSA",
            Self::ExactGrad => "EXACT_GRAD",
        }
    }
}

fn default_nodes() -> usize {
    2
}

fn default_theta() -> f64 {
    1.0
}

fn default_seeds() -> u64 {
    1
}

fn default_eval_trials() -> u64 {
    200
}

fn default_eval_steps() -> u64 {
    fsc_core::learner::CART_POLE_STEP_CAP
}

/// Frozen-policy evaluation protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Rollouts per evaluation point (ignored when the exact value is available).
    #[serde(default = "default_eval_trials")]
    pub trials: u64,
    /// Decision cap per evaluation rollout.
    #[serde(default = "default_eval_steps")]
    pub max_steps: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            trials: default_eval_trials(),
            max_steps: default_eval_steps(),
        }
    }
}

/// Settings used only by the SARSA baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarsaSettings {
    #[serde(default)]
    pub initial_q: f64,
}

fn default_h() -> f64 {
    1e-4
}

fn default_patience() -> usize {
    50
}

/// Settings used only by the exact-gradient comparator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSettings {
    /// Finite-difference step.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Symmetry-breaking perturbation of the initial weights.
    #[serde(default)]
    pub jitter: f64,
    /// Residual of successive approximation; `None` picks the solver automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl Default for ExactSettings {
    fn default() -> Self {
        Self {
            h: default_h(),
            jitter: 0.0,
            tol: None,
            patience: default_patience(),
        }
    }
}

impl ExactSettings {
    pub fn solver(&self) -> Solver {
        self.tol.map_or(Solver::Auto, |tol| Solver::Iterative { tol })
    }

    pub fn descent_config(&self, alpha: f64, n_iters: u64, seed: u64, target: Option<f64>) -> ExactDescentConfig {
        ExactDescentConfig {
            alpha,
            n_iters,
            h: self.h,
            solver: self.solver(),
            jitter: self.jitter,
            seed,
            target,
            patience: self.patience,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(HarnessError::spec("exact.h", "must be finite and positive"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(HarnessError::spec("exact.jitter", "must be finite and non-negative"));
        }
        if self.tol.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return Err(HarnessError::spec("exact.tol", "must be finite and positive"));
        }
        if self.patience == 0 {
            return Err(HarnessError::spec("exact.patience", "must be at least 1"));
        }
        Ok(())
    }
}

/// One training experiment: an algorithm on an environment over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub environment: EnvSpec,
    pub algorithm: Algorithm,
    /// Memory nodes of a VAPS_FSC or EXACT_GRAD graph.
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
    /// Soft-max temperature of the graph, or Boltzmann temperature for SARSA.
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub sarsa: SarsaSettings,
    #[serde(default)]
    pub exact: ExactSettings,
    #[serde(default = "default_seeds")]
    pub n_seeds: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub evaluation: EvalSettings,
    /// Run every multiplier of [`ALPHA_SWEEP`] and report the best.
    #[serde(default)]
    pub alpha_sweep: bool,
    #[serde(default)]
    pub clock: ClockKind,
    /// Directory that relative paths in the spec are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    /// Reads and validates a spec; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut spec: Self = read_json(path)?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.output = spec.base_dir.join(&spec.output);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.algorithm == Algorithm::ExactGrad && !self.environment.is_tabular() {
            return Err(HarnessError::spec(
                "algorithm",
                "EXACT_GRAD needs a tabular environment (load_unload or model)",
            ));
        }
        if self.n_nodes == 0 {
            return Err(HarnessError::spec("n_nodes", "must be at least 1"));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(HarnessError::spec("theta", "must be finite and positive"));
        }
        if self.n_seeds == 0 {
            return Err(HarnessError::spec("n_seeds", "must be at least 1"));
        }
        if self.evaluation.trials == 0 || self.evaluation.max_steps == 0 {
            return Err(HarnessError::spec(
                "evaluation",
                "trials and max_steps must be at least 1",
            ));
        }
        if !self.sarsa.initial_q.is_finite() {
            return Err(HarnessError::spec("sarsa.initial_q", "must be finite"));
        }
        self.exact.validate()?;
        self.learner
            .validate()
            .map_err(|e| HarnessError::spec("learner", e.to_string()))?;
        if self.algorithm == Algorithm::Sarsa && self.learner.gamma_schedule.is_some() {
            return Err(HarnessError::spec("learner.gamma_schedule", "not supported by SARSA"));
        }
        Ok(())
    }

    /// Step sizes to run: the configured one, or the sweep around it.
    pub fn alphas(&self) -> Vec<f64> {
        if self.alpha_sweep {
            ALPHA_SWEEP.iter().map(|m| m * self.learner.alpha).collect()
        } else {
            vec![self.learner.alpha]
        }
    }

    pub fn sarsa_config(&self, alpha: f64, seed: u64) -> SarsaConfig {
        SarsaConfig {
            alpha,
            gamma: self.learner.gamma,
            theta: self.theta,
            n_trials: self.learner.n_trials,
            eval_every: self.learner.eval_every,
            seed,
            max_steps: self.learner.max_steps,
            target: self.learner.target,
            initial_q: self.sarsa.initial_q,
        }
    }

    /// Human-readable environment label for reports.
    pub fn environment_label(&self) -> String {
        match &self.environment {
            EnvSpec::LoadUnload { locations } => format!("load_unload({locations})"),
            EnvSpec::CartPole { observability, .. } => match observability {
                Observability::Full => "cart_pole(full)".into(),
                Observability::Partial => "cart_pole(partial)".into(),
            },
            EnvSpec::Model { path } => format!("model({})", path.display()),
        }
    }
}
