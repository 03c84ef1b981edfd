//! Stochastic policy graphs with soft-max (Boltzmann) parameterization.
//!
//! A graph with node set `N` holds three weight tables:
//!
//! * `q_psi[n, a]`: action choice `psi(n, a) ∝ exp(q_psi[n, a] / theta)`,
//! * `q_eta[n, o, n']`: node transition after observing `o`,
//! * `q_eta0[o, n]`: initial node given the first observation.
//!
//! All tables live in one flat weight vector, in that order, so that a
//! learner can treat the graph as a point in `R^k`. Under the reactive
//! constraint the node is forced to equal the last observation and the two
//! transition tables are empty.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{sample_softmax, softmax_at, softmax_into};

/// Current policy-graph document version.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    #[default]
    None,
    /// One node per observation; the node always equals the last observation.
    Reactive,
}

/// Names one weight of a policy graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coord {
    Psi { node: usize, action: usize },
    Eta { node: usize, obs: usize, next: usize },
    Eta0 { obs: usize, node: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unsupported policy-graph format version {0}")]
    Version(u32),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("graph needs at least one node, observation and action")]
    Empty,
    #[error("reactive graphs need one node per observation ({n_obs}), got {n_nodes}")]
    ReactiveNodes { n_nodes: usize, n_obs: usize },
    #[error("{table} has {actual} entries, expected {expected}")]
    Shape {
        table: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("weight {coord:?} is not finite")]
    NonFinite { coord: Coord },
    #[error("delta has {actual} entries, graph has {expected} weights")]
    DeltaLength { expected: usize, actual: usize },
}

/// Shape of the flat weight vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_nodes: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub constraint: Constraint,
}

impl Layout {
    pub fn n_psi(&self) -> usize {
        self.n_nodes * self.n_actions
    }

    pub fn n_eta(&self) -> usize {
        match self.constraint {
            Constraint::None => self.n_nodes * self.n_obs * self.n_nodes,
            Constraint::Reactive => 0,
        }
    }

    pub fn n_eta0(&self) -> usize {
        match self.constraint {
            Constraint::None => self.n_obs * self.n_nodes,
            Constraint::Reactive => 0,
        }
    }

    /// Total number of weights.
    pub fn len(&self) -> usize {
        self.n_psi() + self.n_eta() + self.n_eta0()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn psi_offset(&self, node: usize) -> usize {
        node * self.n_actions
    }

    #[inline]
    fn eta_offset(&self, node: usize, obs: usize) -> usize {
        self.n_psi() + (node * self.n_obs + obs) * self.n_nodes
    }

    #[inline]
    fn eta0_offset(&self, obs: usize) -> usize {
        self.n_psi() + self.n_eta() + obs * self.n_nodes
    }

    /// Flat index of `coord`, or `None` if it is out of range or inert.
    pub fn index(&self, coord: Coord) -> Option<usize> {
        let reactive = self.constraint == Constraint::Reactive;
        match coord {
            Coord::Psi { node, action } if node < self.n_nodes && action < self.n_actions => {
                Some(self.psi_offset(node) + action)
            }
            Coord::Eta { node, obs, next }
                if !reactive && node < self.n_nodes && obs < self.n_obs && next < self.n_nodes =>
            {
                Some(self.eta_offset(node, obs) + next)
            }
            Coord::Eta0 { obs, node } if !reactive && obs < self.n_obs && node < self.n_nodes => {
                Some(self.eta0_offset(obs) + node)
            }
            _ => None,
        }
    }

    /// Coordinate stored at flat index `i`.
    pub fn coord(&self, i: usize) -> Coord {
        assert!(i < self.len(), "weight index {i} out of range");
        if i < self.n_psi() {
            return Coord::Psi {
                node: i / self.n_actions,
                action: i % self.n_actions,
            };
        }
        let j = i - self.n_psi();
        if j < self.n_eta() {
            let next = j % self.n_nodes;
            let row = j / self.n_nodes;
            return Coord::Eta {
                node: row / self.n_obs,
                obs: row % self.n_obs,
                next,
            };
        }
        let k = j - self.n_eta();
        Coord::Eta0 {
            obs: k / self.n_nodes,
            node: k % self.n_nodes,
        }
    }
}

/// Sparse set of partial derivatives over graph weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradSlice {
    entries: Vec<(Coord, f64)>,
}

impl GradSlice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, coord: Coord, value: f64) {
        self.entries.push((coord, value));
    }

    pub fn entries(&self) -> &[(Coord, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Coord, f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Derivative with respect to `coord`; absent coordinates are zero.
    pub fn get(&self, coord: Coord) -> f64 {
        self.entries
            .iter()
            .filter(|(c, _)| *c == coord)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }
}

/// A stochastic finite-state controller.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGraph {
    layout: Layout,
    theta: f64,
    weights: Vec<f64>,
}

impl PolicyGraph {
    /// Unconstrained graph with all weights 0 (uniform distributions), θ = 1.
    pub fn uniform(n_nodes: usize, n_obs: usize, n_actions: usize) -> Self {
        Self::zeroed(Layout {
            n_nodes,
            n_obs,
            n_actions,
            constraint: Constraint::None,
        })
    }

    /// Reactive graph (one node per observation), uniform actions, θ = 1.
    pub fn reactive(n_obs: usize, n_actions: usize) -> Self {
        Self::zeroed(Layout {
            n_nodes: n_obs,
            n_obs,
            n_actions,
            constraint: Constraint::Reactive,
        })
    }

    fn zeroed(layout: Layout) -> Self {
        assert!(
            layout.n_nodes > 0 && layout.n_obs > 0 && layout.n_actions > 0,
            "empty policy graph"
        );
        Self {
            weights: vec![0.0; layout.len()],
            layout,
            theta: 1.0,
        }
    }

    /// Sets the soft-max temperature.
    pub fn with_theta(mut self, theta: f64) -> Result<Self, GraphError> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(GraphError::Temperature(theta));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.n_nodes
    }

    pub fn n_obs(&self) -> usize {
        self.layout.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.layout.n_actions
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn constraint(&self) -> Constraint {
        self.layout.constraint
    }

    pub fn is_reactive(&self) -> bool {
        self.layout.constraint == Constraint::Reactive
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn q_psi(&self) -> &[f64] {
        &self.weights[..self.layout.n_psi()]
    }

    pub fn q_eta(&self) -> &[f64] {
        let start = self.layout.n_psi();
        &self.weights[start..start + self.layout.n_eta()]
    }

    pub fn q_eta0(&self) -> &[f64] {
        &self.weights[self.layout.n_psi() + self.layout.n_eta()..]
    }

    pub fn weight(&self, coord: Coord) -> Option<f64> {
        self.layout.index(coord).map(|i| self.weights[i])
    }

    pub fn set_weight(&mut self, coord: Coord, value: f64) -> Result<(), GraphError> {
        if !value.is_finite() {
            return Err(GraphError::NonFinite { coord });
        }
        let i = self.layout.index(coord).ok_or(GraphError::Shape {
            table: "coordinate",
            expected: self.layout.len(),
            actual: usize::MAX,
        })?;
        self.weights[i] = value;
        Ok(())
    }

    /// Replaces the whole weight vector.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<(), GraphError> {
        if weights.len() != self.weights.len() {
            return Err(GraphError::DeltaLength {
                expected: self.weights.len(),
                actual: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(GraphError::NonFinite {
                coord: self.layout.coord(i),
            });
        }
        self.weights.copy_from_slice(weights);
        Ok(())
    }

    /// `w += delta`. On a non-finite result the graph is left unchanged.
    pub fn apply_delta(&mut self, delta: &[f64]) -> Result<(), GraphError> {
        if delta.len() != self.weights.len() {
            return Err(GraphError::DeltaLength {
                expected: self.weights.len(),
                actual: delta.len(),
            });
        }
        if let Some(i) = (0..delta.len()).find(|&i| !(self.weights[i] + delta[i]).is_finite()) {
            return Err(GraphError::NonFinite {
                coord: self.layout.coord(i),
            });
        }
        for (w, d) in self.weights.iter_mut().zip(delta) {
            *w += d;
        }
        Ok(())
    }

    /// `w[i] += delta[i]` for the listed indices only.
    pub(crate) fn apply_sparse(&mut self, indices: &[usize], delta: &[f64]) -> Result<(), GraphError> {
        if let Some(&i) = indices
            .iter()
            .find(|&&i| !(self.weights[i] + delta[i]).is_finite())
        {
            return Err(GraphError::NonFinite {
                coord: self.layout.coord(i),
            });
        }
        for &i in indices {
            self.weights[i] += delta[i];
        }
        Ok(())
    }

    #[inline]
    fn psi_row(&self, node: usize) -> &[f64] {
        let off = self.layout.psi_offset(node);
        &self.weights[off..off + self.layout.n_actions]
    }

    #[inline]
    fn eta_row(&self, node: usize, obs: usize) -> &[f64] {
        let off = self.layout.eta_offset(node, obs);
        &self.weights[off..off + self.layout.n_nodes]
    }

    #[inline]
    fn eta0_row(&self, obs: usize) -> &[f64] {
        let off = self.layout.eta0_offset(obs);
        &self.weights[off..off + self.layout.n_nodes]
    }

    fn point_mass(&self, node: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.layout.n_nodes];
        d[node] = 1.0;
        d
    }

    /// `psi(node, ·)`.
    pub fn action_dist(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.n_actions];
        softmax_into(self.psi_row(node), self.theta, &mut out);
        out
    }

    /// `eta(node, obs, ·)`.
    pub fn node_transition_dist(&self, node: usize, obs: usize) -> Vec<f64> {
        assert!(node < self.layout.n_nodes && obs < self.layout.n_obs);
        if self.is_reactive() {
            return self.point_mass(obs);
        }
        let mut out = vec![0.0; self.layout.n_nodes];
        softmax_into(self.eta_row(node, obs), self.theta, &mut out);
        out
    }

    /// `eta0(obs, ·)`.
    pub fn initial_node_dist(&self, obs: usize) -> Vec<f64> {
        assert!(obs < self.layout.n_obs);
        if self.is_reactive() {
            return self.point_mass(obs);
        }
        let mut out = vec![0.0; self.layout.n_nodes];
        softmax_into(self.eta0_row(obs), self.theta, &mut out);
        out
    }

    pub fn action_prob(&self, node: usize, action: usize) -> f64 {
        softmax_at(self.psi_row(node), self.theta, action)
    }

    pub fn transition_prob(&self, node: usize, obs: usize, next: usize) -> f64 {
        if self.is_reactive() {
            return if next == obs { 1.0 } else { 0.0 };
        }
        softmax_at(self.eta_row(node, obs), self.theta, next)
    }

    pub fn initial_prob(&self, obs: usize, node: usize) -> f64 {
        if self.is_reactive() {
            return if node == obs { 1.0 } else { 0.0 };
        }
        softmax_at(self.eta0_row(obs), self.theta, node)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, node: usize, rng: &mut R) -> usize {
        sample_softmax(self.psi_row(node), self.theta, rng)
    }

    /// Draws the next node. Forced transitions consume no randomness.
    pub fn sample_next_node<R: Rng + ?Sized>(&self, node: usize, obs: usize, rng: &mut R) -> usize {
        if self.is_reactive() {
            return obs;
        }
        sample_softmax(self.eta_row(node, obs), self.theta, rng)
    }

    pub fn sample_initial_node<R: Rng + ?Sized>(&self, obs: usize, rng: &mut R) -> usize {
        if self.is_reactive() {
            return obs;
        }
        sample_softmax(self.eta0_row(obs), self.theta, rng)
    }

    /// Calls `f(flat_index, d/dw ln p(chosen))` for every weight of a
    /// soft-max row starting at `offset`.
    fn row_log_grad(&self, offset: usize, len: usize, chosen: usize, mut f: impl FnMut(usize, f64)) {
        let row = &self.weights[offset..offset + len];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|&q| crate::math::exp((q - m) / self.theta)).sum();
        for (b, &q) in row.iter().enumerate() {
            let p = crate::math::exp((q - m) / self.theta) / total;
            let indicator = if b == chosen { 1.0 } else { 0.0 };
            f(offset + b, (indicator - p) / self.theta);
        }
    }

    pub(crate) fn for_each_log_grad_action(&self, node: usize, action: usize, f: impl FnMut(usize, f64)) {
        self.row_log_grad(self.layout.psi_offset(node), self.layout.n_actions, action, f);
    }

    pub(crate) fn for_each_log_grad_transition(
        &self,
        node: usize,
        obs: usize,
        next: usize,
        f: impl FnMut(usize, f64),
    ) {
        if !self.is_reactive() {
            self.row_log_grad(self.layout.eta_offset(node, obs), self.layout.n_nodes, next, f);
        }
    }

    pub(crate) fn for_each_log_grad_initial(&self, obs: usize, node: usize, f: impl FnMut(usize, f64)) {
        if !self.is_reactive() {
            self.row_log_grad(self.layout.eta0_offset(obs), self.layout.n_nodes, node, f);
        }
    }

    fn collect(&self, visit: impl FnOnce(&mut dyn FnMut(usize, f64))) -> GradSlice {
        let mut slice = GradSlice::new();
        visit(&mut |i, v| slice.push(self.layout.coord(i), v));
        slice
    }

    /// Gradient of `ln psi(node, action)`: `(1[a = b] - psi(node, b)) / theta`
    /// on the `(node, ·)` row, zero elsewhere.
    pub fn log_grad_action(&self, node: usize, action: usize) -> GradSlice {
        self.collect(|f| self.for_each_log_grad_action(node, action, f))
    }

    /// Gradient of `ln eta(node, obs, next)`; empty for reactive graphs.
    pub fn log_grad_transition(&self, node: usize, obs: usize, next: usize) -> GradSlice {
        self.collect(|f| self.for_each_log_grad_transition(node, obs, next, f))
    }

    /// Gradient of `ln eta0(obs, node)`; empty for reactive graphs.
    pub fn log_grad_initial(&self, obs: usize, node: usize) -> GradSlice {
        self.collect(|f| self.for_each_log_grad_initial(obs, node, f))
    }
}

/// Serialized form of a policy graph. Tables are flat and row-major:
/// `q_psi[n * n_actions + a]`, `q_eta[(n * n_obs + o) * n_nodes + n']`,
/// `q_eta0[o * n_nodes + n]`. Reactive graphs store empty transition tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub format_version: u32,
    pub n_nodes: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub theta: f64,
    pub constraint: Constraint,
    pub q_psi: Vec<f64>,
    #[serde(default)]
    pub q_eta: Vec<f64>,
    #[serde(default)]
    pub q_eta0: Vec<f64>,
}

impl From<&PolicyGraph> for GraphDocument {
    fn from(g: &PolicyGraph) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n_nodes: g.n_nodes(),
            n_obs: g.n_obs(),
            n_actions: g.n_actions(),
            theta: g.theta,
            constraint: g.constraint(),
            q_psi: g.q_psi().to_vec(),
            q_eta: g.q_eta().to_vec(),
            q_eta0: g.q_eta0().to_vec(),
        }
    }
}

impl TryFrom<GraphDocument> for PolicyGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDocument) -> Result<Self, GraphError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(GraphError::Version(doc.format_version));
        }
        if doc.n_nodes == 0 || doc.n_obs == 0 || doc.n_actions == 0 {
            return Err(GraphError::Empty);
        }
        if doc.constraint == Constraint::Reactive && doc.n_nodes != doc.n_obs {
            return Err(GraphError::ReactiveNodes {
                n_nodes: doc.n_nodes,
                n_obs: doc.n_obs,
            });
        }
        let layout = Layout {
            n_nodes: doc.n_nodes,
            n_obs: doc.n_obs,
            n_actions: doc.n_actions,
            constraint: doc.constraint,
        };
        for (table, v, expected) in [
            ("q_psi", &doc.q_psi, layout.n_psi()),
            ("q_eta", &doc.q_eta, layout.n_eta()),
            ("q_eta0", &doc.q_eta0, layout.n_eta0()),
        ] {
            if v.len() != expected {
                return Err(GraphError::Shape {
                    table,
                    expected,
                    actual: v.len(),
                });
            }
        }
        let mut weights = doc.q_psi;
        weights.extend(doc.q_eta);
        weights.extend(doc.q_eta0);
        let mut graph = Self::zeroed(layout).with_theta(doc.theta)?;
        graph.set_weights(&weights)?;
        Ok(graph)
    }
}
