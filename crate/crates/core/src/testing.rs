//! Random fixtures shared by unit tests.

use alloc::vec::Vec;

use rand::Rng;

use crate::graph::PolicyGraph;
use crate::pomdp::{PomdpDocument, TabularPomdp};

fn stochastic_row<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Dense random model and a random graph over it.
pub(crate) fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    ns: usize,
    no: usize,
    na: usize,
    nn: usize,
) -> (TabularPomdp, PolicyGraph) {
    let mut t = Vec::new();
    for _ in 0..ns * na {
        t.extend(stochastic_row(rng, ns));
    }
    let mut b = Vec::new();
    for _ in 0..ns {
        b.extend(stochastic_row(rng, no));
    }
    let r: Vec<f64> = (0..ns * na * ns).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let model = TabularPomdp::try_from(PomdpDocument {
        n_states: ns,
        n_obs: no,
        n_actions: na,
        gamma: rng.gen_range(0.5..0.95),
        t,
        b,
        r,
        pi0: stochastic_row(rng, ns),
        goal_obs: None,
    })
    .unwrap();
    let mut graph = PolicyGraph::uniform(nn, no, na);
    let w: Vec<f64> = (0..graph.layout().len()).map(|_| rng.gen_range(-1.5..1.5)).collect();
    graph.set_weights(&w).unwrap();
    (model, graph)
}
