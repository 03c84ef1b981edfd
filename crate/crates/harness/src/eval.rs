//! Frozen-policy evaluation.

use std::path::{Path, PathBuf};

use fsc_core::exact::{exact_value, mdp_optimal_value};
use fsc_core::graph::PolicyGraph;
use fsc_core::rollout::{mean_discounted_return, mean_trial_length, GraphRunner, MeanEstimate};
use fsc_core::sarsa::SarsaAgent;
use fsc_core::seed::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvSpec};
use crate::io::{load_graph, read_json};
use crate::spec::EvalSettings;
use crate::HarnessError;

/// What an evaluation number measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Exact expected discounted return from the initial distribution.
    ExactValue,
    /// Mean control decisions per trial before failure or the cap.
    MeanTrialLength,
    /// Monte Carlo mean of the discounted return.
    MeanDiscountedReturn,
}

/// Performance of a graph with frozen weights.
pub fn evaluate_graph(
    env: &Env,
    graph: &PolicyGraph,
    settings: &EvalSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(Measure, MeanEstimate), HarnessError> {
    Ok(match env {
        Env::Tabular(m) => {
            let v = exact_value(m, graph)?.v0;
            (
                Measure::ExactValue,
                MeanEstimate {
                    mean: v,
                    std_err: 0.0,
                    n: 1,
                },
            )
        }
        Env::CartPole(c) => {
            check_graph(env, graph)?;
            let est = mean_trial_length(c, &mut GraphRunner::new(graph), settings.trials, settings.max_steps, rng)
                .map_err(fsc_core::learner::LearnError::from)?;
            (Measure::MeanTrialLength, est)
        }
    })
}

fn check_graph(env: &Env, graph: &PolicyGraph) -> Result<(), HarnessError> {
    use fsc_core::env::Environment;
    if graph.n_obs() != env.n_obs() || graph.n_actions() != env.n_actions() {
        return Err(HarnessError::spec(
            "graph",
            format!(
                "graph expects {} observations and {} actions, environment has {} and {}",
                graph.n_obs(),
                graph.n_actions(),
                env.n_obs(),
                env.n_actions()
            ),
        ));
    }
    Ok(())
}

/// Performance of a SARSA agent's Boltzmann policy with frozen values.
pub fn evaluate_sarsa(
    env: &Env,
    agent: &SarsaAgent,
    gamma: f64,
    settings: &EvalSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(Measure, MeanEstimate), HarnessError> {
    let mut policy = agent.policy();
    let learn = fsc_core::learner::LearnError::from;
    Ok(match env {
        Env::Tabular(m) => (
            Measure::MeanDiscountedReturn,
            mean_discounted_return(m, &mut policy, gamma, settings.trials, settings.max_steps, rng).map_err(learn)?,
        ),
        Env::CartPole(c) => (
            Measure::MeanTrialLength,
            mean_trial_length(c, &mut policy, settings.trials, settings.max_steps, rng).map_err(learn)?,
        ),
    })
}

/// `fsc eval` configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub environment: EnvSpec,
    /// Graph files, one per seed, relative to the config file.
    pub graphs: Vec<PathBuf>,
    /// Discount for tabular models; defaults to the model's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub evaluation: EvalSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl EvalSpec {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut spec: Self = read_json(path)?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if spec.graphs.is_empty() {
            return Err(HarnessError::spec("graphs", "at least one graph file is needed"));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub measure: Measure,
    pub mean: f64,
    pub per_graph: Vec<f64>,
    /// Standard error of each rollout estimate (zero for exact values).
    pub std_err: Vec<f64>,
    /// Rollouts per graph, when rollouts were used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Optimal value of the fully observable model, for tabular environments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_value: Option<f64>,
}

/// Evaluates every listed graph with the frozen-policy protocol.
pub fn cmd_eval(spec: &EvalSpec) -> Result<EvalReport, HarnessError> {
    let env = spec.environment.build(spec.gamma, &spec.base_dir)?;
    let mut per_graph = Vec::new();
    let mut std_err = Vec::new();
    let mut measure = Measure::ExactValue;
    for (i, path) in spec.graphs.iter().enumerate() {
        let graph = load_graph(&spec.base_dir.join(path))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, i as u64));
        let (m, est) = evaluate_graph(&env, &graph, &spec.evaluation, &mut rng)?;
        measure = m;
        per_graph.push(est.mean);
        std_err.push(est.std_err);
    }
    let mean = per_graph.iter().sum::<f64>() / per_graph.len() as f64;
    Ok(EvalReport {
        measure,
        mean,
        per_graph,
        std_err,
        trials: (measure != Measure::ExactValue).then_some(spec.evaluation.trials),
        optimal_value: env.tabular().map(mdp_optimal_value),
    })
}
