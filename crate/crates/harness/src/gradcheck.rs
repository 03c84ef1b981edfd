//! Sampled per-trial weight changes against finite differences of the exact value.
//!
//! Under geometric termination with the undiscounted error, the expected
//! weight change of a trial is `-alpha` times the gradient of the expected
//! error `-v0`. This module measures both sides.

use std::path::{Path, PathBuf};

use fsc_core::exact::finite_diff_gradient;
use fsc_core::graph::{Coord, PolicyGraph};
use fsc_core::learner::{run_trial, LearnerConfig};
use fsc_core::pomdp::TabularPomdp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{load_graph, load_model, read_json};
use crate::HarnessError;

fn default_nodes() -> usize {
    2
}

fn default_trials() -> u64 {
    100_000
}

fn default_alpha() -> f64 {
    1.0
}

fn default_h() -> f64 {
    1e-5
}

/// `fsc gradcheck` configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSpec {
    pub model: PathBuf,
    /// Graph file; a uniform graph with `n_nodes` nodes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl GradcheckSpec {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut spec: Self = read_json(path)?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub coord: String,
    /// Mean per-trial weight change.
    pub sampled: f64,
    pub std_err: f64,
    /// `-alpha` times the finite-difference gradient of `-v0`.
    pub expected: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub trials: u64,
    pub alpha: f64,
    pub rows: Vec<GradRow>,
    pub max_abs_z: f64,
}

pub fn coord_label(c: Coord) -> String {
    match c {
        Coord::Psi { node, action } => format!("psi(node={node},action={action})"),
        Coord::Eta { node, obs, next } => format!("eta(node={node},obs={obs},next={next})"),
        Coord::Eta0 { obs, node } => format!("eta0(obs={obs},node={node})"),
    }
}

/// Compares the sample mean of `trials` per-trial weight changes with the
/// finite-difference prediction, coordinate by coordinate.
pub fn gradient_check(
    model: &TabularPomdp,
    graph: &PolicyGraph,
    trials: u64,
    alpha: f64,
    h: f64,
    seed: u64,
) -> Result<GradReport, HarnessError> {
    if trials < 2 {
        return Err(HarnessError::spec("trials", "at least 2 trials are needed"));
    }
    let config = LearnerConfig::maintenance(alpha, model.gamma(), trials);
    let expected = finite_diff_gradient(model, graph, h)?;
    let n_w = graph.layout().len();
    let mut sum = vec![0.0; n_w];
    let mut sum_sq = vec![0.0; n_w];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let outcome = run_trial(model, graph, &config, &mut rng)?;
        for (k, &d) in outcome.traces.delta_acc().iter().enumerate() {
            sum[k] += d;
            sum_sq[k] += d * d;
        }
    }
    let n = trials as f64;
    let layout = graph.layout();
    let mut rows = Vec::with_capacity(n_w);
    for k in 0..n_w {
        let coord = layout.coord(k);
        let mean = sum[k] / n;
        let var = ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
        let std_err = (var / n).sqrt();
        let exp = -alpha * expected.get(coord);
        let diff = mean - exp;
        let z = if std_err > 0.0 {
            diff / std_err
        } else if diff.abs() <= 1e-12 * exp.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        rows.push(GradRow {
            coord: coord_label(coord),
            sampled: mean,
            std_err,
            expected: exp,
            z,
        });
    }
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(GradReport {
        trials,
        alpha,
        rows,
        max_abs_z,
    })
}

pub fn cmd_gradcheck(spec: &GradcheckSpec) -> Result<GradReport, HarnessError> {
    let model = load_model(&spec.base_dir.join(&spec.model))?;
    let graph = match &spec.graph {
        Some(p) => load_graph(&spec.base_dir.join(p))?,
        None => PolicyGraph::uniform(spec.n_nodes, model.n_obs(), model.n_actions()),
    };
    gradient_check(&model, &graph, spec.trials, spec.alpha, spec.h, spec.seed)
}
