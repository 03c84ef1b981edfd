//! Cart-pole balancing with discretized observations.
//!
//! Dynamics are the frictionless cart-pole equations of motion integrated
//! with one explicit Euler step per decision (0.02 s, i.e. 50 decisions per
//! simulated second). The controller never sees the physical state, only the
//! index of the partition cell containing it.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvState, Environment, Transition};
use crate::math::{abs, cos, sin};

pub const ACTION_PUSH_LEFT: usize = 0;
pub const ACTION_PUSH_RIGHT: usize = 1;

/// Integration step: 50 decisions per simulated second.
pub const DT: f64 = 1.0 / 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CartPoleError {
    #[error("partition edges for {axis} are not strictly increasing")]
    NonMonotone { axis: &'static str },
    #[error("partition edges for {axis} contain a non-finite value")]
    NonFinite { axis: &'static str },
    #[error("{0}")]
    Mode(&'static str),
    #[error("physical parameter {0} must be positive and finite")]
    Parameter(&'static str),
}

/// Physical constants of the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_pole_length: f64,
    pub force: f64,
    /// Trial fails once `|x|` exceeds this (meters).
    pub x_limit: f64,
    /// Trial fails once `|phi|` exceeds this (radians).
    pub angle_limit: f64,
    /// Reward of every non-failing step.
    pub reward: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_pole_length: 0.5,
            force: 10.0,
            x_limit: 2.4,
            angle_limit: 12.0_f64.to_radians(),
            reward: 1.0,
        }
    }
}

/// Which state variables feed the observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observability {
    /// Position, angle and both velocities.
    Full,
    /// Position and angle only.
    Partial,
}

/// Interior cell boundaries along one axis; `edges.len() + 1` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Partition {
    edges: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Partition {
    type Error = CartPoleError;

    fn try_from(edges: Vec<f64>) -> Result<Self, CartPoleError> {
        Partition::new(edges, "axis")
    }
}

impl From<Partition> for Vec<f64> {
    fn from(p: Partition) -> Vec<f64> {
        p.edges
    }
}

impl Partition {
    pub fn new(edges: Vec<f64>, axis: &'static str) -> Result<Self, CartPoleError> {
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(CartPoleError::NonFinite { axis });
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CartPoleError::NonMonotone { axis });
        }
        Ok(Self { edges })
    }

    /// `parts` cells symmetric about zero whose widths double moving
    /// outward; the outermost boundary sits at `half_range` and is not an
    /// edge (the outer cells are unbounded).
    pub fn geometric(half_range: f64, parts: usize) -> Self {
        assert!(parts >= 1 && half_range > 0.0);
        let side = (parts - 1) / 2;
        let mut positive = Vec::with_capacity(side);
        if parts.is_multiple_of(2) {
            // Cells of width w, 2w, 4w, ... on each side of an edge at 0.
            let per_side = parts / 2;
            let w = half_range / ((1u64 << per_side) - 1) as f64;
            for k in 0..per_side - 1 {
                positive.push(w * ((1u64 << (k + 1)) - 1) as f64);
            }
        } else {
            // Central cell of half-width w, then cells of width 2w, 4w, ...
            let w = half_range / ((1u64 << (side + 1)) - 1) as f64;
            for k in 0..side {
                positive.push(w * ((1u64 << (k + 1)) - 1) as f64);
            }
        }
        let mut edges: Vec<f64> = positive.iter().rev().map(|e| -e).collect();
        if parts.is_multiple_of(2) {
            edges.push(0.0);
        }
        edges.extend(positive);
        Self { edges }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cells(&self) -> usize {
        self.edges.len() + 1
    }

    /// Cell containing `v`; a value on an edge belongs to the upper cell.
    pub fn cell(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e <= v)
    }
}

/// Partitions of every observed axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub x: Partition,
    pub angle: Partition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_dot: Option<Partition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_dot: Option<Partition>,
}

impl PartitionSpec {
    /// Default partitions: 6 position × 3 angle × 3 × 3 velocity cells when
    /// fully observable, 8 position × 6 angle cells when partially.
    pub fn default_for(mode: Observability, params: &CartPoleParams) -> Self {
        match mode {
            Observability::Full => Self {
                x: Partition::geometric(params.x_limit, 6),
                angle: Partition::geometric(params.angle_limit, 3),
                // Inner velocity cells of ±0.5 m/s and ±50 °/s.
                x_dot: Some(Partition::geometric(1.5, 3)),
                angle_dot: Some(Partition::geometric(150.0_f64.to_radians(), 3)),
            },
            Observability::Partial => Self {
                x: Partition::geometric(params.x_limit, 8),
                angle: Partition::geometric(params.angle_limit, 6),
                x_dot: None,
                angle_dot: None,
            },
        }
    }
}

/// Physical state of the cart and pole.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl CartPoleState {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.x_dot.is_finite() && self.phi.is_finite() && self.phi_dot.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartPoleEnv {
    params: CartPoleParams,
    mode: Observability,
    partitions: PartitionSpec,
    start_jitter: f64,
}

/// Builds a cart-pole environment; `partitions = None` selects the defaults
/// for `mode`.
pub fn make_cart_pole(
    mode: Observability,
    partitions: Option<PartitionSpec>,
) -> Result<CartPoleEnv, CartPoleError> {
    CartPoleEnv::new(CartPoleParams::default(), mode, partitions)
}

impl CartPoleEnv {
    pub fn new(
        params: CartPoleParams,
        mode: Observability,
        partitions: Option<PartitionSpec>,
    ) -> Result<Self, CartPoleError> {
        let checks = [
            ("gravity", params.gravity),
            ("cart_mass", params.cart_mass),
            ("pole_mass", params.pole_mass),
            ("half_pole_length", params.half_pole_length),
            ("force", params.force),
            ("x_limit", params.x_limit),
            ("angle_limit", params.angle_limit),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(CartPoleError::Parameter(name));
            }
        }
        if !params.reward.is_finite() {
            return Err(CartPoleError::Parameter("reward"));
        }
        let partitions = partitions.unwrap_or_else(|| PartitionSpec::default_for(mode, &params));
        let has_velocities = partitions.x_dot.is_some() && partitions.angle_dot.is_some();
        let has_any_velocity = partitions.x_dot.is_some() || partitions.angle_dot.is_some();
        match mode {
            Observability::Full if !has_velocities => {
                return Err(CartPoleError::Mode(
                    "fully observable cart-pole needs both velocity partitions",
                ))
            }
            Observability::Partial if has_any_velocity => {
                return Err(CartPoleError::Mode(
                    "partially observable cart-pole takes no velocity partitions",
                ))
            }
            _ => {}
        }
        Ok(Self {
            params,
            mode,
            partitions,
            start_jitter: 0.0,
        })
    }

    /// Start each trial with every state component uniform in
    /// `[-jitter, jitter]` instead of exactly centered.
    pub fn with_start_jitter(mut self, jitter: f64) -> Self {
        self.start_jitter = jitter.max(0.0);
        self
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn mode(&self) -> Observability {
        self.mode
    }

    pub fn partitions(&self) -> &PartitionSpec {
        &self.partitions
    }

    /// Observation index of a physical state (mixed radix over the axes).
    pub fn observe(&self, s: &CartPoleState) -> usize {
        let p = &self.partitions;
        let mut idx = p.x.cell(s.x) * p.angle.cells() + p.angle.cell(s.phi);
        if let (Observability::Full, Some(xd), Some(pd)) = (self.mode, &p.x_dot, &p.angle_dot) {
            idx = (idx * xd.cells() + xd.cell(s.x_dot)) * pd.cells() + pd.cell(s.phi_dot);
        }
        idx
    }

    /// One Euler step under `action`.
    pub fn integrate(&self, s: &CartPoleState, action: usize) -> CartPoleState {
        let p = &self.params;
        let force = if action == ACTION_PUSH_RIGHT { p.force } else { -p.force };
        let total_mass = p.cart_mass + p.pole_mass;
        let pml = p.pole_mass * p.half_pole_length;
        let (sin_phi, cos_phi) = (sin(s.phi), cos(s.phi));
        let temp = (force + pml * s.phi_dot * s.phi_dot * sin_phi) / total_mass;
        let phi_acc = (p.gravity * sin_phi - cos_phi * temp)
            / (p.half_pole_length * (4.0 / 3.0 - p.pole_mass * cos_phi * cos_phi / total_mass));
        let x_acc = temp - pml * phi_acc * cos_phi / total_mass;
        CartPoleState {
            x: s.x + DT * s.x_dot,
            x_dot: s.x_dot + DT * x_acc,
            phi: s.phi + DT * s.phi_dot,
            phi_dot: s.phi_dot + DT * phi_acc,
        }
    }

    pub fn failed(&self, s: &CartPoleState) -> bool {
        abs(s.x) > self.params.x_limit || abs(s.phi) > self.params.angle_limit
    }
}

impl Environment for CartPoleEnv {
    fn n_obs(&self) -> usize {
        let p = &self.partitions;
        let mut n = p.x.cells() * p.angle.cells();
        if let (Observability::Full, Some(xd), Some(pd)) = (self.mode, &p.x_dot, &p.angle_dot) {
            n *= xd.cells() * pd.cells();
        }
        n
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, usize) {
        let s = if self.start_jitter > 0.0 {
            let j = self.start_jitter;
            let mut draw = || rng.gen_range(-j..=j);
            CartPoleState {
                x: draw(),
                x_dot: draw(),
                phi: draw(),
                phi_dot: draw(),
            }
        } else {
            CartPoleState::default()
        };
        (EnvState::CartPole(s), self.observe(&s))
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        action: usize,
        _rng: &mut R,
    ) -> Result<Transition, EnvError> {
        let EnvState::CartPole(s) = state else {
            return Err(EnvError::ForeignState);
        };
        if action >= 2 {
            return Err(EnvError::InvalidAction { action, n_actions: 2 });
        }
        let next = self.integrate(s, action);
        let terminal = self.failed(&next);
        Ok(Transition {
            state: EnvState::CartPole(next),
            reward: if terminal { 0.0 } else { self.params.reward },
            obs: self.observe(&next),
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn partial() -> CartPoleEnv {
        make_cart_pole(Observability::Partial, None).unwrap()
    }

    #[test]
    fn observation_space_sizes() {
        assert_eq!(partial().n_obs(), 48);
        assert_eq!(make_cart_pole(Observability::Full, None).unwrap().n_obs(), 162);
    }

    #[test]
    fn geometric_edges_shrink_toward_center() {
        let p = Partition::geometric(2.4, 6);
        assert_eq!(p.cells(), 6);
        let e = p.edges();
        let w = 2.4 / 7.0;
        let expected = [-3.0 * w, -w, 0.0, w, 3.0 * w];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let p3 = Partition::geometric(12.0, 3);
        assert_eq!(p3.edges(), &[-4.0, 4.0]);
        for parts in 1..10 {
            let p = Partition::geometric(1.0, parts);
            assert_eq!(p.cells(), parts);
            let widths: Vec<f64> = p.edges().windows(2).map(|w| w[1] - w[0]).collect();
            let n = widths.len();
            for k in 0..n {
                assert!((widths[k] - widths[n - 1 - k]).abs() < 1e-12);
            }
            for k in 1..n.div_ceil(2) {
                assert!(widths[k - 1] >= widths[k] - 1e-12);
            }
        }
    }

    #[test]
    fn centered_state_hits_central_cell() {
        let env = partial();
        let o = env.observe(&CartPoleState::default());
        assert_eq!(o, 4 * 6 + 3);
        let full = make_cart_pole(Observability::Full, None).unwrap();
        let o = full.observe(&CartPoleState::default());
        assert_eq!(o, ((3 * 3 + 1) * 3 + 1) * 3 + 1);
    }

    #[test]
    fn reset_is_centered() {
        let env = partial();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (s, o) = env.reset(&mut rng);
        assert_eq!(s, EnvState::CartPole(CartPoleState::default()));
        assert_eq!(o, env.observe(&CartPoleState::default()));
    }

    #[test]
    fn rejects_non_monotone_edges() {
        assert_eq!(
            Partition::new(vec![0.0, 1.0, 1.0], "x"),
            Err(CartPoleError::NonMonotone { axis: "x" })
        );
        let spec = PartitionSpec {
            x: Partition::geometric(2.4, 8),
            angle: Partition::geometric(0.2, 6),
            x_dot: Some(Partition::geometric(1.0, 3)),
            angle_dot: None,
        };
        assert!(matches!(
            make_cart_pole(Observability::Partial, Some(spec)),
            Err(CartPoleError::Mode(_))
        ));
    }

    #[test]
    fn pole_falls_without_control() {
        let env = partial();
        let mut s = CartPoleState {
            phi: 0.01,
            ..CartPoleState::default()
        };
        let mut steps = 0;
        while !env.failed(&s) {
            // alternate pushes keep the cart near the center; the pole still tips
            s = env.integrate(&s, steps % 2);
            steps += 1;
            assert!(steps < 10_000);
        }
        assert!(s.phi > 0.0);
    }

    #[test]
    fn failing_step_pays_nothing() {
        let env = partial();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut s, _) = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            let tr = env.step(&s, ACTION_PUSH_RIGHT, &mut rng).unwrap();
            total += tr.reward;
            s = tr.state;
            if tr.terminal {
                assert_eq!(tr.reward, 0.0);
                break;
            }
        }
        assert!(total > 0.0);
    }

    #[test]
    fn golden_random_trace() {
        let env = partial();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut s, o) = env.reset(&mut rng);
        let mut observations = vec![o];
        let mut actions = vec![];
        for _ in 0..10 {
            let a = rng.gen_range(0..2);
            let tr = env.step(&s, a, &mut rng).unwrap();
            actions.push(a);
            observations.push(tr.obs);
            s = tr.state;
        }
        assert_eq!(actions, GOLDEN_ACTIONS);
        assert_eq!(observations, GOLDEN_OBS);
    }

    const GOLDEN_ACTIONS: [usize; 10] = [0, 1, 1, 0, 1, 1, 1, 1, 1, 1];
    const GOLDEN_OBS: [usize; 11] = [27, 27, 21, 21, 21, 21, 26, 26, 25, 25, 25];

    proptest! {
        #[test]
        fn partial_observation_ignores_velocities(
            x in -3.0..3.0f64,
            phi in -0.3..0.3f64,
            v1 in -10.0..10.0f64,
            v2 in -10.0..10.0f64,
            w1 in -10.0..10.0f64,
            w2 in -10.0..10.0f64,
        ) {
            let env = partial();
            let a = CartPoleState { x, phi, x_dot: v1, phi_dot: v2 };
            let b = CartPoleState { x, phi, x_dot: w1, phi_dot: w2 };
            prop_assert_eq!(env.observe(&a), env.observe(&b));
            prop_assert!(env.observe(&a) < env.n_obs());
        }

        #[test]
        fn full_observation_in_range(
            x in -3.0..3.0f64,
            phi in -0.3..0.3f64,
            v1 in -10.0..10.0f64,
            v2 in -10.0..10.0f64,
        ) {
            let env = make_cart_pole(Observability::Full, None).unwrap();
            let s = CartPoleState { x, phi, x_dot: v1, phi_dot: v2 };
            prop_assert!(env.observe(&s) < env.n_obs());
        }
    }
}
