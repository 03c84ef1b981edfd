//! Exact evaluation of a policy graph on a known tabular POMDP.
//!
//! Running a graph in a POMDP induces a Markov chain over (state, node)
//! pairs. Its value solves
//!
//! ```text
//! V(s,n) = sum_a psi(n,a) sum_s' T(s,a,s') [R(s,a,s') + gamma sum_o B(s',o) sum_n' eta(n,o,n') V(s',n')]
//! ```
//!
//! and the controller value is `v0 = sum_s pi0(s) sum_o B(s,o) sum_n eta0(o,n) V(s,n)`.
//! The same machinery provides trajectory-prefix probabilities, central
//! finite-difference gradients, exact gradient ascent on `v0`, and value
//! iteration on the underlying fully observable MDP.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::curve::{Clock, CurvePoint, LearnCurve};
use crate::graph::{GradSlice, PolicyGraph};
use crate::learner::Step;
use crate::linalg::solve_dense;
use crate::math::abs;
use crate::pomdp::TabularPomdp;

/// Largest cross-product chain solved by dense factorization under [`Solver::Auto`].
pub const DENSE_LIMIT: usize = 10_000;
/// Residual at which successive approximation stops.
pub const ITERATIVE_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error(
        "graph expects {graph_obs} observations and {graph_actions} actions, \
         model has {model_obs} and {model_actions}"
    )]
    Shape {
        graph_obs: usize,
        graph_actions: usize,
        model_obs: usize,
        model_actions: usize,
    },
    #[error("successive approximation stopped after {sweeps} sweeps with residual {residual:e}")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error("value decreased for {patience} consecutive iterations (at iteration {iteration})")]
    Diverged { iteration: u64, patience: usize },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("{0}")]
    Hook(alloc::string::String),
}

/// How the cross-product linear system is solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Solver {
    /// Dense factorization up to [`DENSE_LIMIT`] pairs, iteration beyond.
    Auto,
    Dense,
    /// Successive approximation until the sup-norm change drops below `tol`.
    Iterative { tol: f64 },
}

/// Value of every (state, node) pair and of the controller as a whole.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossValue {
    /// `values[s * n_nodes + n]`.
    pub values: Vec<f64>,
    pub n_nodes: usize,
    pub v0: f64,
}

impl CrossValue {
    pub fn value(&self, s: usize, n: usize) -> f64 {
        self.values[s * self.n_nodes + n]
    }
}

/// Cost accounting of one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    /// Sweeps of successive approximation (0 for a dense solve).
    pub sweeps: usize,
    pub residual: f64,
    /// Approximate multiply-add count.
    pub work: u64,
}

fn check_shape(pomdp: &TabularPomdp, graph: &PolicyGraph) -> Result<(), ExactError> {
    if pomdp.n_obs() != graph.n_obs() || pomdp.n_actions() != graph.n_actions() {
        return Err(ExactError::Shape {
            graph_obs: graph.n_obs(),
            graph_actions: graph.n_actions(),
            model_obs: pomdp.n_obs(),
            model_actions: pomdp.n_actions(),
        });
    }
    Ok(())
}

/// Factored transition structure of the cross-product chain.
struct CrossChain {
    ns: usize,
    nn: usize,
    /// Expected immediate reward, `[s * nn + n]`.
    reward: Vec<f64>,
    /// `sum_a psi(n,a) T(s,a,s')`, `[(s * nn + n) * ns + s']`.
    state_mix: Vec<f64>,
    /// `sum_o B(s',o) eta(n,o,n')`, `[(n * ns + s') * nn + n']`.
    node_mix: Vec<f64>,
}

impl CrossChain {
    fn new(pomdp: &TabularPomdp, graph: &PolicyGraph) -> Self {
        let (ns, nn, na, no) = (pomdp.n_states(), graph.n_nodes(), pomdp.n_actions(), pomdp.n_obs());
        let psi: Vec<Vec<f64>> = (0..nn).map(|n| graph.action_dist(n)).collect();
        let mut reward = vec![0.0; ns * nn];
        let mut state_mix = vec![0.0; ns * nn * ns];
        for s in 0..ns {
            for (n, p) in psi.iter().enumerate() {
                let row = &mut state_mix[(s * nn + n) * ns..(s * nn + n + 1) * ns];
                let mut r = 0.0;
                for (a, &pa) in p.iter().enumerate().take(na) {
                    let t = pomdp.transition_row(s, a);
                    let rw = pomdp.reward_row(s, a);
                    for next in 0..ns {
                        row[next] += pa * t[next];
                        r += pa * t[next] * rw[next];
                    }
                }
                reward[s * nn + n] = r;
            }
        }
        let mut node_mix = vec![0.0; nn * ns * nn];
        for n in 0..nn {
            let eta: Vec<Vec<f64>> = (0..no).map(|o| graph.node_transition_dist(n, o)).collect();
            for next in 0..ns {
                let b = pomdp.observation_row(next);
                let row = &mut node_mix[(n * ns + next) * nn..(n * ns + next + 1) * nn];
                for (o, &bo) in b.iter().enumerate() {
                    if bo == 0.0 {
                        continue;
                    }
                    for (m, &e) in eta[o].iter().enumerate() {
                        row[m] += bo * e;
                    }
                }
            }
        }
        Self {
            ns,
            nn,
            reward,
            state_mix,
            node_mix,
        }
    }

    fn solve_dense(&self, gamma: f64) -> (Vec<f64>, SolveStats) {
        let (ns, nn) = (self.ns, self.nn);
        let k = ns * nn;
        let mut a = vec![0.0; k * k];
        for s in 0..ns {
            for n in 0..nn {
                let i = s * nn + n;
                let mix = &self.state_mix[i * ns..(i + 1) * ns];
                for (next, &p) in mix.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let nm = &self.node_mix[(n * ns + next) * nn..(n * ns + next + 1) * nn];
                    for (m, &q) in nm.iter().enumerate() {
                        a[i * k + next * nn + m] -= gamma * p * q;
                    }
                }
                a[i * k + i] += 1.0;
            }
        }
        let mut b = self.reward.clone();
        let x = solve_dense(&mut a, &mut b, k)
            .expect("I - gamma P is non-singular for gamma < 1 and stochastic P");
        let kk = k as u64;
        let stats = SolveStats {
            sweeps: 0,
            residual: 0.0,
            work: kk * kk * kk / 3 + kk * kk,
        };
        (x, stats)
    }

    fn solve_iterative(&self, gamma: f64, tol: f64) -> Result<(Vec<f64>, SolveStats), ExactError> {
        let (ns, nn) = (self.ns, self.nn);
        let mut v = vec![0.0; ns * nn];
        let mut next_v = vec![0.0; ns * nn];
        let mut w = vec![0.0; nn * ns];
        let per_sweep = (ns * nn * ns + nn * ns * nn) as u64;
        let mut residual = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            for n in 0..nn {
                for s2 in 0..ns {
                    let nm = &self.node_mix[(n * ns + s2) * nn..(n * ns + s2 + 1) * nn];
                    w[n * ns + s2] = nm.iter().zip(&v[s2 * nn..(s2 + 1) * nn]).map(|(q, x)| q * x).sum();
                }
            }
            residual = 0.0;
            for s in 0..ns {
                for n in 0..nn {
                    let i = s * nn + n;
                    let mix = &self.state_mix[i * ns..(i + 1) * ns];
                    let cont: f64 = mix.iter().zip(&w[n * ns..(n + 1) * ns]).map(|(p, x)| p * x).sum();
                    let x = self.reward[i] + gamma * cont;
                    residual = residual.max(abs(x - v[i]));
                    next_v[i] = x;
                }
            }
            core::mem::swap(&mut v, &mut next_v);
            if residual < tol {
                return Ok((
                    v,
                    SolveStats {
                        sweeps: sweep,
                        residual,
                        work: sweep as u64 * per_sweep,
                    },
                ));
            }
        }
        Err(ExactError::NotConverged {
            sweeps: MAX_SWEEPS,
            residual,
        })
    }
}

fn initial_value(pomdp: &TabularPomdp, graph: &PolicyGraph, values: &[f64]) -> f64 {
    let nn = graph.n_nodes();
    let eta0: Vec<Vec<f64>> = (0..pomdp.n_obs()).map(|o| graph.initial_node_dist(o)).collect();
    let mut v0 = 0.0;
    for (s, &p) in pomdp.pi0().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &b) in pomdp.observation_row(s).iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let inner: f64 = eta0[o].iter().enumerate().map(|(n, e)| e * values[s * nn + n]).sum();
            v0 += p * b * inner;
        }
    }
    v0
}

/// Expected discounted return of `graph` on `pomdp` (discount taken from the model).
pub fn exact_value(pomdp: &TabularPomdp, graph: &PolicyGraph) -> Result<CrossValue, ExactError> {
    exact_value_with(pomdp, graph, Solver::Auto).map(|(v, _)| v)
}

pub fn exact_value_with(
    pomdp: &TabularPomdp,
    graph: &PolicyGraph,
    solver: Solver,
) -> Result<(CrossValue, SolveStats), ExactError> {
    check_shape(pomdp, graph)?;
    let chain = CrossChain::new(pomdp, graph);
    let gamma = pomdp.gamma();
    let (values, stats) = match solver {
        Solver::Dense => chain.solve_dense(gamma),
        Solver::Auto if chain.ns * chain.nn <= DENSE_LIMIT => chain.solve_dense(gamma),
        Solver::Auto => chain.solve_iterative(gamma, ITERATIVE_TOL)?,
        Solver::Iterative { tol } => chain.solve_iterative(gamma, tol)?,
    };
    let v0 = initial_value(pomdp, graph, &values);
    Ok((
        CrossValue {
            values,
            n_nodes: graph.n_nodes(),
            v0,
        },
        stats,
    ))
}

/// Probability of an observable-and-internal trajectory prefix.
///
/// Forward filtering over hidden states: the unnormalized state
/// distribution absorbs `pi0`/`T`, the observation likelihoods `B`, the
/// controller factors `eta0`/`eta`/`psi`, and the reward indicator
/// `[R(s,a,s') = r]` (rewards are deterministic given the transition).
/// Impossible prefixes have probability 0; the empty prefix has probability 1.
pub fn prefix_prob(pomdp: &TabularPomdp, graph: &PolicyGraph, prefix: &[Step]) -> f64 {
    let ns = pomdp.n_states();
    let Some(first) = prefix.first() else {
        return 1.0;
    };
    let in_range = |s: &Step| {
        s.obs < pomdp.n_obs() && s.action < pomdp.n_actions() && s.node < graph.n_nodes()
    };
    if !prefix.iter().all(in_range) || graph.n_obs() != pomdp.n_obs() {
        return 0.0;
    }
    // alpha(s) = Pr(prefix up to o^j, n^j, a^j and s^j = s), before r^j.
    let ctrl0 = graph.initial_prob(first.obs, first.node) * graph.action_prob(first.node, first.action);
    let mut alpha: Vec<f64> = (0..ns)
        .map(|s| pomdp.pi0()[s] * pomdp.observation(s, first.obs) * ctrl0)
        .collect();
    let mut next = vec![0.0; ns];
    for pair in prefix.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        let ctrl = graph.transition_prob(prev.node, cur.obs, cur.node) * graph.action_prob(cur.node, cur.action);
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, &mass) in alpha.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let t = pomdp.transition_row(s, prev.action);
            let r = pomdp.reward_row(s, prev.action);
            for s2 in 0..ns {
                if t[s2] > 0.0 && r[s2] == prev.reward {
                    next[s2] += mass * t[s2];
                }
            }
        }
        for (s2, x) in next.iter_mut().enumerate() {
            *x *= pomdp.observation(s2, cur.obs) * ctrl;
        }
        core::mem::swap(&mut alpha, &mut next);
    }
    let last = prefix[prefix.len() - 1];
    alpha
        .iter()
        .enumerate()
        .map(|(s, &mass)| {
            let t = pomdp.transition_row(s, last.action);
            let r = pomdp.reward_row(s, last.action);
            let p_reward: f64 = (0..ns).filter(|&s2| r[s2] == last.reward).map(|s2| t[s2]).sum();
            mass * p_reward
        })
        .sum()
}

/// Central-difference gradient of `-v0` with respect to every weight.
pub fn finite_diff_gradient(
    pomdp: &TabularPomdp,
    graph: &PolicyGraph,
    h: f64,
) -> Result<GradSlice, ExactError> {
    let (dense, _) = finite_diff_gradient_with(pomdp, graph, h, Solver::Auto)?;
    let layout = graph.layout();
    let mut slice = GradSlice::new();
    for (i, d) in dense.into_iter().enumerate() {
        slice.push(layout.coord(i), d);
    }
    Ok(slice)
}

/// Dense gradient of `-v0` plus the solver work spent computing it.
pub fn finite_diff_gradient_with(
    pomdp: &TabularPomdp,
    graph: &PolicyGraph,
    h: f64,
    solver: Solver,
) -> Result<(Vec<f64>, u64), ExactError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(ExactError::Config("finite-difference step must be positive"));
    }
    check_shape(pomdp, graph)?;
    let mut probe = graph.clone();
    let mut weights = graph.weights().to_vec();
    let mut grad = Vec::with_capacity(weights.len());
    let mut work = 0;
    for i in 0..weights.len() {
        let w = weights[i];
        weights[i] = w + h;
        probe.set_weights(&weights).map_err(|_| ExactError::Config("weight overflow"))?;
        let (plus, s1) = exact_value_with(pomdp, &probe, solver)?;
        weights[i] = w - h;
        probe.set_weights(&weights).map_err(|_| ExactError::Config("weight overflow"))?;
        let (minus, s2) = exact_value_with(pomdp, &probe, solver)?;
        weights[i] = w;
        work += s1.work + s2.work;
        grad.push(-(plus.v0 - minus.v0) / (2.0 * h));
    }
    Ok((grad, work))
}

/// Settings of exact gradient ascent on `v0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactDescentConfig {
    pub alpha: f64,
    pub n_iters: u64,
    /// Finite-difference step.
    pub h: f64,
    pub solver: Solver,
    /// Half-width of the uniform perturbation added to the initial weights.
    /// A graph whose nodes are interchangeable is a stationary point of
    /// `v0`; the perturbation lets the iteration leave it.
    pub jitter: f64,
    pub seed: u64,
    /// Stop at the first iteration whose value reaches this.
    pub target: Option<f64>,
    /// Consecutive value decreases tolerated before reporting divergence.
    pub patience: usize,
}

impl ExactDescentConfig {
    pub fn new(alpha: f64, n_iters: u64) -> Self {
        Self {
            alpha,
            n_iters,
            h: 1e-5,
            solver: Solver::Auto,
            jitter: 0.0,
            seed: 0,
            target: None,
            patience: 50,
        }
    }
}

/// `w <- w - alpha * grad(-v0)`, recording `v0` at every iteration.
pub fn exact_gradient_descent_with<C, P>(
    pomdp: &TabularPomdp,
    graph: &mut PolicyGraph,
    config: &ExactDescentConfig,
    clock: &mut C,
    mut on_point: P,
) -> Result<LearnCurve, ExactError>
where
    C: Clock + ?Sized,
    P: FnMut(&CurvePoint) -> Result<(), ExactError>,
{
    if !(config.alpha.is_finite() && config.alpha >= 0.0) {
        return Err(ExactError::Config("alpha must be finite and non-negative"));
    }
    check_shape(pomdp, graph)?;
    if config.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w: Vec<f64> = graph
            .weights()
            .iter()
            .map(|w| w + rng.gen_range(-config.jitter..=config.jitter))
            .collect();
        graph.set_weights(&w).map_err(|_| ExactError::Config("weight overflow"))?;
    }
    let mut curve = LearnCurve::new();
    let mut work: u64 = 0;
    let mut last_value = f64::NEG_INFINITY;
    let mut decreasing = 0usize;
    for iter in 0..=config.n_iters {
        // Measuring v0 for the curve is evaluation, not learning: it is
        // neither timed nor counted.
        let (value, _) = exact_value_with(pomdp, graph, config.solver)?;
        let point = CurvePoint {
            trial: iter,
            ticks: clock.ticks(work),
            performance: value.v0,
            gamma: pomdp.gamma(),
            alpha: config.alpha,
            seed: config.seed,
        };
        on_point(&point)?;
        curve.push(point);
        if value.v0 < last_value {
            decreasing += 1;
            if decreasing >= config.patience {
                return Err(ExactError::Diverged {
                    iteration: iter,
                    patience: config.patience,
                });
            }
        } else {
            decreasing = 0;
        }
        last_value = value.v0;
        if iter == config.n_iters || config.target.is_some_and(|t| value.v0 >= t) {
            break;
        }
        clock.resume();
        let step = finite_diff_gradient_with(pomdp, graph, config.h, config.solver).and_then(|(grad, w)| {
            work += w;
            let delta: Vec<f64> = grad.iter().map(|g| -config.alpha * g).collect();
            graph
                .apply_delta(&delta)
                .map_err(|_| ExactError::Config("weights became non-finite"))
        });
        clock.pause();
        step?;
    }
    Ok(curve)
}

/// [`exact_gradient_descent_with`] with plain settings and work-unit ticks.
pub fn exact_gradient_descent(
    pomdp: &TabularPomdp,
    graph: &mut PolicyGraph,
    alpha: f64,
    n_iters: u64,
) -> Result<LearnCurve, ExactError> {
    exact_gradient_descent_with(
        pomdp,
        graph,
        &ExactDescentConfig::new(alpha, n_iters),
        &mut crate::curve::WorkClock,
        |_| Ok(()),
    )
}

/// Result of value iteration on the underlying MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

/// Value iteration on `(S, A, T, R)` until the sup-norm change drops below `tol`.
pub fn value_iteration(pomdp: &TabularPomdp, tol: f64) -> ValueIteration {
    let (ns, na) = (pomdp.n_states(), pomdp.n_actions());
    let gamma = pomdp.gamma();
    let mut v = vec![0.0; ns];
    let mut residuals = Vec::new();
    loop {
        let mut next = vec![0.0; ns];
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            let best = (0..na)
                .map(|a| {
                    let t = pomdp.transition_row(s, a);
                    let r = pomdp.reward_row(s, a);
                    (0..ns).map(|s2| t[s2] * (r[s2] + gamma * v[s2])).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max(abs(best - v[s]));
            next[s] = best;
        }
        v = next;
        residuals.push(residual);
        if residual < tol || residuals.len() >= MAX_SWEEPS {
            break;
        }
    }
    ValueIteration { values: v, residuals }
}

/// Optimal expected discounted return of the fully observable MDP from `pi0`.
pub fn mdp_optimal_value(pomdp: &TabularPomdp) -> f64 {
    let vi = value_iteration(pomdp, ITERATIVE_TOL);
    pomdp.pi0().iter().zip(&vi.values).map(|(p, v)| p * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Coord;
    use crate::pomdp::{make_load_unload, PomdpDocument, OBS_CORRIDOR, OBS_LOAD, OBS_UNLOAD};

    fn one_state() -> TabularPomdp {
        TabularPomdp::try_from(PomdpDocument {
            n_states: 1,
            n_obs: 1,
            n_actions: 1,
            gamma: 0.9,
            t: vec![1.0],
            b: vec![1.0],
            r: vec![1.0],
            pi0: vec![1.0],
            goal_obs: None,
        })
        .unwrap()
    }

    /// Two-node shuttle controller: node 0 pushes right, node 1 pushes left.
    pub(crate) fn shuttle_graph(big: f64) -> PolicyGraph {
        let mut g = PolicyGraph::uniform(2, 3, 2);
        let set = |g: &mut PolicyGraph, c, v| g.set_weight(c, v).unwrap();
        set(&mut g, Coord::Psi { node: 0, action: 1 }, big);
        set(&mut g, Coord::Psi { node: 1, action: 0 }, big);
        for n in 0..2 {
            set(&mut g, Coord::Eta { node: n, obs: OBS_UNLOAD, next: 0 }, big);
            set(&mut g, Coord::Eta { node: n, obs: OBS_LOAD, next: 1 }, big);
            set(&mut g, Coord::Eta { node: n, obs: OBS_CORRIDOR, next: n }, big);
        }
        for o in 0..3 {
            set(&mut g, Coord::Eta0 { obs: o, node: 0 }, big);
        }
        g
    }

    #[test]
    fn geometric_series() {
        for g in [PolicyGraph::uniform(1, 1, 1), PolicyGraph::uniform(3, 1, 1)] {
            let v = exact_value(&one_state(), &g).unwrap();
            assert!((v.v0 - 10.0).abs() < 1e-12);
        }
        assert!((mdp_optimal_value(&one_state()) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn shuttle_value_matches_rollout_and_mdp_optimum() {
        let m = make_load_unload(5).unwrap();
        let g = shuttle_graph(50.0);
        let v = exact_value(&m, &g).unwrap().v0;
        let gamma: f64 = 0.9;
        let closed = gamma.powi(7) / (1.0 - gamma.powi(8));
        // Truncated rollout of the deterministic cycle.
        let lu = crate::pomdp::LoadUnload::new(5).unwrap();
        let (mut s, mut going_right, mut total, mut disc) = (0usize, true, 0.0, 1.0);
        for _ in 0..1000 {
            let (loc, _) = lu.location(s);
            if loc == 4 {
                going_right = false;
            } else if loc == 0 {
                going_right = true;
            }
            let (next, r) = lu.successor(s, usize::from(going_right));
            total += disc * r;
            disc *= gamma;
            s = next;
        }
        assert!((total - closed).abs() < 1e-12);
        assert!((v - total).abs() < 1e-9, "{v} vs {total}");
        assert!((mdp_optimal_value(&m) - v).abs() < 1e-9);
    }

    #[test]
    fn solvers_agree() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (m, g) = crate::testing::random_instance(&mut rng, 4, 3, 3, 3);
            let (d, _) = exact_value_with(&m, &g, Solver::Dense).unwrap();
            let (i, stats) = exact_value_with(&m, &g, Solver::Iterative { tol: 1e-12 }).unwrap();
            assert!(stats.sweeps > 0);
            for (a, b) in d.values.iter().zip(&i.values) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!((d.v0 - i.v0).abs() < 1e-8);
            assert!(mdp_optimal_value(&m) >= d.v0 - 1e-9);
            let _ = rng.gen::<u8>();
        }
    }

    #[test]
    fn residuals_contract() {
        let m = make_load_unload(5).unwrap();
        let vi = value_iteration(&m, 1e-10);
        for w in vi.residuals.windows(2) {
            assert!(w[1] <= m.gamma() * w[0] + 1e-15);
        }
        assert!(*vi.residuals.last().unwrap() < 1e-10);
    }

    #[test]
    fn prefix_prob_on_deterministic_model_is_policy_product() {
        let m = one_state();
        let mut g = PolicyGraph::uniform(2, 1, 1);
        g.set_weight(Coord::Eta0 { obs: 0, node: 1 }, 0.4).unwrap();
        g.set_weight(Coord::Eta { node: 1, obs: 0, next: 0 }, -0.3).unwrap();
        let steps = [
            Step { obs: 0, node: 1, action: 0, reward: 1.0 },
            Step { obs: 0, node: 0, action: 0, reward: 1.0 },
        ];
        let expected = g.initial_prob(0, 1) * g.transition_prob(1, 0, 0);
        assert!((prefix_prob(&m, &g, &steps) - expected).abs() < 1e-15);
        let wrong_reward = [Step { obs: 0, node: 1, action: 0, reward: 0.0 }];
        assert_eq!(prefix_prob(&m, &g, &wrong_reward), 0.0);
    }

    #[test]
    fn impossible_observation_has_zero_probability() {
        let m = make_load_unload(5).unwrap();
        let g = PolicyGraph::uniform(2, 3, 2);
        let steps = [Step { obs: OBS_LOAD, node: 0, action: 0, reward: 0.0 }];
        assert_eq!(prefix_prob(&m, &g, &steps), 0.0);
    }

    #[test]
    fn unreachable_rows_have_zero_gradient() {
        // Observation 2 is never emitted, so its eta rows cannot matter.
        let m = TabularPomdp::try_from(PomdpDocument {
            n_states: 2,
            n_obs: 3,
            n_actions: 2,
            gamma: 0.8,
            t: vec![0.3, 0.7, 0.6, 0.4, 0.5, 0.5, 0.1, 0.9],
            b: vec![0.6, 0.4, 0.0, 0.2, 0.8, 0.0],
            r: vec![1.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.0, 1.0],
            pi0: vec![0.5, 0.5],
            goal_obs: None,
        })
        .unwrap();
        let g = PolicyGraph::uniform(2, 3, 2);
        let grad = finite_diff_gradient(&m, &g, 1e-5).unwrap();
        for n in 0..2 {
            for n2 in 0..2 {
                assert!(grad.get(Coord::Eta { node: n, obs: 2, next: n2 }).abs() < 1e-8);
            }
            assert!(grad.get(Coord::Eta0 { obs: 2, node: n }).abs() < 1e-8);
        }
        let reactive = PolicyGraph::reactive(3, 2);
        let grad = finite_diff_gradient(&m, &reactive, 1e-5).unwrap();
        assert!(grad.iter().all(|(c, _)| matches!(c, Coord::Psi { .. })));
        assert_eq!(grad.get(Coord::Eta { node: 0, obs: 0, next: 1 }), 0.0);
    }

    #[test]
    fn finite_differences_are_step_stable() {
        let m = make_load_unload(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut g = PolicyGraph::uniform(2, 3, 2);
        let w: Vec<f64> = (0..g.layout().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.set_weights(&w).unwrap();
        let grads: Vec<Vec<f64>> = [1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&h| finite_diff_gradient_with(&m, &g, h, Solver::Dense).unwrap().0)
            .collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..3 {
            for j in i + 1..3 {
                let diff: Vec<f64> = grads[i].iter().zip(&grads[j]).map(|(a, b)| a - b).collect();
                assert!(norm(&diff) / norm(&grads[i]) < 1e-3);
            }
        }
    }

    #[test]
    fn zero_step_size_is_flat() {
        let m = make_load_unload(5).unwrap();
        let mut g = PolicyGraph::uniform(2, 3, 2);
        let curve = exact_gradient_descent(&m, &mut g, 0.0, 5).unwrap();
        assert_eq!(curve.len(), 6);
        let first = curve.points[0].performance;
        assert!(curve.points.iter().all(|p| p.performance == first));
    }

    #[test]
    fn first_order_improvement() {
        let m = make_load_unload(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut g = PolicyGraph::uniform(2, 3, 2);
        let w: Vec<f64> = (0..g.layout().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.set_weights(&w).unwrap();
        let (grad, _) = finite_diff_gradient_with(&m, &g, 1e-5, Solver::Dense).unwrap();
        let norm2: f64 = grad.iter().map(|x| x * x).sum();
        let alpha = 1e-6;
        let config = ExactDescentConfig {
            solver: Solver::Dense,
            ..ExactDescentConfig::new(alpha, 1)
        };
        let curve =
            exact_gradient_descent_with(&m, &mut g, &config, &mut crate::curve::WorkClock, |_| Ok(())).unwrap();
        let change = curve.points[1].performance - curve.points[0].performance;
        let predicted = alpha * norm2;
        assert!(
            (change - predicted).abs() < 1e-3 * predicted,
            "{change} vs {predicted}"
        );
    }

    #[test]
    fn exact_ascent_leaves_symmetric_start_with_jitter() {
        let m = make_load_unload(5).unwrap();
        let optimum = mdp_optimal_value(&m);
        let mut g = PolicyGraph::uniform(2, 3, 2);
        let config = ExactDescentConfig {
            jitter: 0.05,
            seed: 1,
            target: Some(0.9 * optimum),
            ..ExactDescentConfig::new(20.0, 3000)
        };
        let curve =
            exact_gradient_descent_with(&m, &mut g, &config, &mut crate::curve::WorkClock, |_| Ok(())).unwrap();
        assert!(curve.last().unwrap().performance >= 0.9 * optimum);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = make_load_unload(5).unwrap();
        let g = PolicyGraph::uniform(2, 2, 2);
        assert!(matches!(exact_value(&m, &g), Err(ExactError::Shape { .. })));
    }
}
