//! Multi-seed training runs with per-seed and mean learning curves.
//!
//! Output layout (inside `output`, or `output/alpha_<k>` per swept step size):
//! `seed_<r>.csv` for run `r`, `mean.csv` averaged over runs, and the
//! learned controller of each run (`graph_<r>.json` or `sarsa_<r>.json`).
//! A sweep also writes `sweep.json` naming the best step size.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fsc_core::curve::{CurvePoint, LearnCurve};
use fsc_core::env::Environment;
use fsc_core::exact::{exact_gradient_descent_with, mdp_optimal_value, ExactError};
use fsc_core::graph::PolicyGraph;
use fsc_core::learner::{train_with, LearnError};
use fsc_core::rollout::MeanEstimate;
use fsc_core::sarsa::{train_sarsa, SarsaAgent};
use fsc_core::seed::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::RunClock;
use crate::envs::Env;
use crate::eval::{evaluate_graph, evaluate_sarsa};
use crate::io::{create_dir, save_graph, write_json, CurveWriter};
use crate::spec::{Algorithm, ExperimentSpec};
use crate::HarnessError;

/// The controller a run ends with.
#[derive(Clone, Debug)]
pub enum Learned {
    Graph(PolicyGraph),
    Sarsa(SarsaAgent),
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: u64,
    pub seed: u64,
    pub alpha: f64,
    pub curve: LearnCurve,
    pub learned: Learned,
}

impl RunResult {
    pub fn final_performance(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |p| p.performance)
    }

    /// Performance recorded at the last evaluation point not after `trial`.
    pub fn performance_at(&self, trial: u64) -> Option<f64> {
        self.curve
            .points
            .iter()
            .take_while(|p| p.trial <= trial)
            .last()
            .map(|p| p.performance)
    }
}

#[derive(Clone, Debug)]
pub struct AlphaResult {
    pub alpha: f64,
    pub dir: PathBuf,
    pub runs: Vec<RunResult>,
    pub final_performance: MeanEstimate,
}

impl AlphaResult {
    /// Per-run performance at `trial`, see [`RunResult::performance_at`].
    pub fn performance_at(&self, trial: u64) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.performance_at(trial)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    pub environment: String,
    pub results: Vec<AlphaResult>,
    /// Index into `results` of the step size with the best mean final performance.
    pub best: usize,
    /// Optimal value of the fully observable model, for tabular environments.
    pub optimal_value: Option<f64>,
}

impl TrainReport {
    pub fn best(&self) -> &AlphaResult {
        &self.results[self.best]
    }
}

#[derive(Serialize, Deserialize)]
struct SarsaDocument {
    n_obs: usize,
    n_actions: usize,
    q: Vec<f64>,
}

#[derive(Serialize)]
struct SweepEntry {
    alpha: f64,
    dir: PathBuf,
    final_mean: f64,
    final_std_err: f64,
    finals: Vec<f64>,
}

#[derive(Serialize)]
struct SweepDocument {
    algorithm: &'static str,
    environment: String,
    selection: &'static str,
    best_alpha: f64,
    entries: Vec<SweepEntry>,
}

fn hook<E: std::fmt::Display>(e: E) -> LearnError {
    LearnError::Hook(e.to_string())
}

fn exact_hook<E: std::fmt::Display>(e: E) -> ExactError {
    ExactError::Hook(e.to_string())
}

/// Initial controller for a graph-based algorithm.
pub fn initial_graph(spec: &ExperimentSpec, env: &Env) -> Result<PolicyGraph, HarnessError> {
    let graph = match spec.algorithm {
        Algorithm::VapsRp => PolicyGraph::reactive(env.n_obs(), env.n_actions()),
        _ => PolicyGraph::uniform(spec.n_nodes, env.n_obs(), env.n_actions()),
    };
    Ok(graph.with_theta(spec.theta)?)
}

/// One seed of one step size. Writes the run's curve to `csv` when given.
pub fn run_one(
    spec: &ExperimentSpec,
    env: &Env,
    alpha: f64,
    run: u64,
    csv: Option<&Path>,
) -> Result<RunResult, HarnessError> {
    let seed = derive_seed(spec.learner.seed, run);
    let mut writer = csv.map(CurveWriter::create).transpose()?;
    let mut write = |p: &CurvePoint| -> Result<(), HarnessError> {
        match writer.as_mut() {
            Some(w) => w.write(p),
            None => Ok(()),
        }
    };
    let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut clock = RunClock::new(spec.clock);
    let (curve, learned) = match spec.algorithm {
        Algorithm::VapsFsc | Algorithm::VapsRp => {
            let mut graph = initial_graph(spec, env)?;
            let mut config = spec.learner.clone();
            config.alpha = alpha;
            config.seed = seed;
            let curve = train_with(
                env,
                &mut graph,
                &config,
                &mut clock,
                |g, _| {
                    evaluate_graph(env, g, &spec.evaluation, &mut eval_rng)
                        .map(|(_, e)| e.mean)
                        .map_err(hook)
                },
                |p| write(p).map_err(hook),
            )?;
            (curve, Learned::Graph(graph))
        }
        Algorithm::Sarsa => {
            let config = spec.sarsa_config(alpha, seed);
            let mut agent = SarsaAgent::from_config(env.n_obs(), env.n_actions(), &config);
            let curve = train_sarsa(
                env,
                &mut agent,
                &config,
                &mut clock,
                |a, _| {
                    evaluate_sarsa(env, a, config.gamma, &spec.evaluation, &mut eval_rng)
                        .map(|(_, e)| e.mean)
                        .map_err(hook)
                },
                |p| write(p).map_err(hook),
            )?;
            (curve, Learned::Sarsa(agent))
        }
        Algorithm::ExactGrad => {
            let model = env
                .tabular()
                .ok_or_else(|| HarnessError::spec("algorithm", "EXACT_GRAD needs a tabular environment"))?;
            let mut graph = initial_graph(spec, env)?;
            let config = spec
                .exact
                .descent_config(alpha, spec.learner.n_trials, seed, spec.learner.target);
            let curve = exact_gradient_descent_with(model, &mut graph, &config, &mut clock, |p| {
                write(p).map_err(exact_hook)
            })?;
            (curve, Learned::Graph(graph))
        }
    };
    Ok(RunResult {
        run,
        seed,
        alpha,
        curve,
        learned,
    })
}

/// Mean over runs at every recorded trial index. A run that stopped early
/// (target reached) contributes its last value to later indices.
pub fn mean_curve(runs: &[RunResult], seed: u64) -> LearnCurve {
    let trials: BTreeSet<u64> = runs.iter().flat_map(|r| r.curve.points.iter().map(|p| p.trial)).collect();
    let mut mean = LearnCurve::new();
    for trial in trials {
        let at: Vec<&CurvePoint> = runs
            .iter()
            .filter_map(|r| r.curve.points.iter().take_while(|p| p.trial <= trial).last())
            .collect();
        if at.is_empty() {
            continue;
        }
        let n = at.len() as f64;
        mean.push(CurvePoint {
            trial,
            ticks: (at.iter().map(|p| p.ticks as f64).sum::<f64>() / n).round() as u64,
            performance: at.iter().map(|p| p.performance).sum::<f64>() / n,
            gamma: at[0].gamma,
            alpha: at[0].alpha,
            seed,
        });
    }
    mean
}

fn save_learned(dir: &Path, result: &RunResult) -> Result<(), HarnessError> {
    match &result.learned {
        Learned::Graph(g) => save_graph(&dir.join(format!("graph_{}.json", result.run)), g),
        Learned::Sarsa(a) => write_json(
            &dir.join(format!("sarsa_{}.json", result.run)),
            &SarsaDocument {
                n_obs: a.n_obs(),
                n_actions: a.n_actions(),
                q: a.values().to_vec(),
            },
        ),
    }
}

/// Runs every (step size, seed) job and writes curves, means and controllers.
pub fn cmd_train(spec: &ExperimentSpec) -> Result<TrainReport, HarnessError> {
    spec.validate()?;
    let env = spec.environment.build(Some(spec.learner.gamma), &spec.base_dir)?;
    let alphas = spec.alphas();
    let dirs: Vec<PathBuf> = if spec.alpha_sweep {
        (0..alphas.len()).map(|k| spec.output.join(format!("alpha_{k}"))).collect()
    } else {
        vec![spec.output.clone()]
    };
    for d in &dirs {
        create_dir(d)?;
    }
    let jobs: Vec<(usize, u64)> = (0..alphas.len())
        .flat_map(|k| (0..spec.n_seeds).map(move |r| (k, r)))
        .collect();
    let outcomes: Vec<Result<RunResult, HarnessError>> = jobs
        .par_iter()
        .map(|&(k, run)| {
            let csv = dirs[k].join(format!("seed_{run}.csv"));
            run_one(spec, &env, alphas[k], run, Some(&csv))
        })
        .collect();
    let mut per_alpha: Vec<Vec<RunResult>> = alphas.iter().map(|_| Vec::new()).collect();
    for ((k, _), outcome) in jobs.iter().zip(outcomes) {
        per_alpha[*k].push(outcome?);
    }

    let mut results = Vec::new();
    for ((alpha, dir), runs) in alphas.iter().zip(&dirs).zip(per_alpha) {
        let mut writer = CurveWriter::create(&dir.join("mean.csv"))?;
        for p in &mean_curve(&runs, spec.learner.seed).points {
            writer.write(p)?;
        }
        for r in &runs {
            save_learned(dir, r)?;
        }
        results.push(AlphaResult {
            alpha: *alpha,
            dir: dir.clone(),
            final_performance: MeanEstimate::from_samples(runs.iter().map(RunResult::final_performance)),
            runs,
        });
    }
    let best = results
        .iter()
        .enumerate()
        .fold(0, |best, (k, r)| {
            if r.final_performance.mean > results[best].final_performance.mean {
                k
            } else {
                best
            }
        });
    let report = TrainReport {
        algorithm: spec.algorithm,
        environment: spec.environment_label(),
        results,
        best,
        optimal_value: env.tabular().map(mdp_optimal_value),
    };
    if spec.alpha_sweep {
        write_json(
            &spec.output.join("sweep.json"),
            &SweepDocument {
                algorithm: spec.algorithm.name(),
                environment: report.environment.clone(),
                selection: "highest mean final performance",
                best_alpha: report.best().alpha,
                entries: report
                    .results
                    .iter()
                    .map(|r| SweepEntry {
                        alpha: r.alpha,
                        dir: r.dir.strip_prefix(&spec.output).unwrap_or(&r.dir).to_path_buf(),
                        final_mean: r.final_performance.mean,
                        final_std_err: r.final_performance.std_err,
                        finals: r.runs.iter().map(RunResult::final_performance).collect(),
                    })
                    .collect(),
            },
        )?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_with(points: &[(u64, f64)]) -> RunResult {
        let mut curve = LearnCurve::new();
        for &(trial, performance) in points {
            curve.push(CurvePoint {
                trial,
                ticks: trial * 10,
                performance,
                gamma: 0.9,
                alpha: 0.1,
                seed: 1,
            });
        }
        RunResult {
            run: 0,
            seed: 1,
            alpha: 0.1,
            curve,
            learned: Learned::Graph(PolicyGraph::uniform(1, 1, 1)),
        }
    }

    #[test]
    fn mean_carries_stopped_runs_forward() {
        let a = run_with(&[(0, 0.0), (10, 1.0)]);
        let b = run_with(&[(0, 2.0), (10, 3.0), (20, 5.0)]);
        let m = mean_curve(&[a.clone(), b], 7);
        let perf: Vec<f64> = m.points.iter().map(|p| p.performance).collect();
        assert_eq!(perf, vec![1.0, 2.0, 3.0]);
        assert!(m.points.iter().all(|p| p.seed == 7));
        assert_eq!(a.performance_at(15), Some(1.0));
        assert_eq!(a.performance_at(5), Some(0.0));
    }
}
