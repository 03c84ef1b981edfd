//! Tabular POMDP models and the load/unload corridor.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvState, Environment, Transition};
use crate::math::{abs, sample_categorical};

/// Row sums of `T` and `B` must be within this distance of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{table} has {actual} entries, expected {expected}")]
    Shape {
        table: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("model needs at least one state, observation and action")]
    Empty,
    #[error("{row} has invalid entry {value}")]
    BadEntry { row: String, value: f64 },
    #[error("{row} sums to {sum}, expected 1")]
    NotStochastic { row: String, sum: f64 },
    #[error("{row} has non-finite entry")]
    NonFinite { row: String },
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
    #[error("goal observation {goal} out of range ({n_obs} observations)")]
    GoalOutOfRange { goal: usize, n_obs: usize },
    #[error("state {state} emits the goal observation but leaves itself under action {action}")]
    GoalNotAbsorbing { state: usize, action: usize },
    #[error("load/unload needs at least 2 locations, got {0}")]
    TooFewLocations(usize),
}

/// Serialized form of a tabular POMDP. Arrays are dense and row-major:
/// `T[(s * n_actions + a) * n_states + s']`, `B[s * n_obs + o]`,
/// `R` laid out like `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PomdpDocument {
    pub n_states: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub pi0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_obs: Option<usize>,
}

/// A finite POMDP with validated stochastic tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPomdp {
    doc: PomdpDocument,
}

fn check_len(table: &'static str, v: &[f64], expected: usize) -> Result<(), ModelError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(ModelError::Shape {
            table,
            expected,
            actual: v.len(),
        })
    }
}

fn check_distribution(row: &[f64], name: impl Fn() -> String) -> Result<(), ModelError> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(ModelError::BadEntry { row: name(), value: p });
        }
        sum += p;
    }
    if abs(sum - 1.0) > STOCHASTIC_TOL {
        return Err(ModelError::NotStochastic { row: name(), sum });
    }
    Ok(())
}

impl TryFrom<PomdpDocument> for TabularPomdp {
    type Error = ModelError;

    fn try_from(doc: PomdpDocument) -> Result<Self, ModelError> {
        let (ns, no, na) = (doc.n_states, doc.n_obs, doc.n_actions);
        if ns == 0 || no == 0 || na == 0 {
            return Err(ModelError::Empty);
        }
        check_len("T", &doc.t, ns * na * ns)?;
        check_len("B", &doc.b, ns * no)?;
        check_len("R", &doc.r, ns * na * ns)?;
        check_len("pi0", &doc.pi0, ns)?;
        if !(0.0..1.0).contains(&doc.gamma) {
            return Err(ModelError::Discount(doc.gamma));
        }
        for s in 0..ns {
            for a in 0..na {
                let base = (s * na + a) * ns;
                check_distribution(&doc.t[base..base + ns], || {
                    format!("T(s={s}, a={a}, .)")
                })?;
                if doc.r[base..base + ns].iter().any(|r| !r.is_finite()) {
                    return Err(ModelError::NonFinite {
                        row: format!("R(s={s}, a={a}, .)"),
                    });
                }
            }
            check_distribution(&doc.b[s * no..(s + 1) * no], || format!("B(s={s}, .)"))?;
        }
        check_distribution(&doc.pi0, || String::from("pi0"))?;
        if let Some(goal) = doc.goal_obs {
            if goal >= no {
                return Err(ModelError::GoalOutOfRange { goal, n_obs: no });
            }
            for s in 0..ns {
                if doc.b[s * no + goal] > 0.0 {
                    for a in 0..na {
                        if doc.t[(s * na + a) * ns + s] != 1.0 {
                            return Err(ModelError::GoalNotAbsorbing { state: s, action: a });
                        }
                    }
                }
            }
        }
        Ok(Self { doc })
    }
}

impl TabularPomdp {
    pub fn n_states(&self) -> usize {
        self.doc.n_states
    }

    pub fn n_obs(&self) -> usize {
        self.doc.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.doc.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.doc.gamma
    }

    pub fn goal_obs(&self) -> Option<usize> {
        self.doc.goal_obs
    }

    pub fn pi0(&self) -> &[f64] {
        &self.doc.pi0
    }

    /// `T(s, a, ·)` as a slice over next states.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.doc.n_states;
        let base = (s * self.doc.n_actions + a) * ns;
        &self.doc.t[base..base + ns]
    }

    /// `R(s, a, ·)` as a slice over next states.
    #[inline]
    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.doc.n_states;
        let base = (s * self.doc.n_actions + a) * ns;
        &self.doc.r[base..base + ns]
    }

    /// `B(s, ·)` as a slice over observations.
    #[inline]
    pub fn observation_row(&self, s: usize) -> &[f64] {
        let no = self.doc.n_obs;
        &self.doc.b[s * no..(s + 1) * no]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }

    pub fn observation(&self, s: usize, o: usize) -> f64 {
        self.observation_row(s)[o]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward_row(s, a)[next]
    }

    /// Same model with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ModelError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(ModelError::Discount(gamma));
        }
        let mut doc = self.doc.clone();
        doc.gamma = gamma;
        Ok(Self { doc })
    }

    pub fn document(&self) -> &PomdpDocument {
        &self.doc
    }

    pub fn into_document(self) -> PomdpDocument {
        self.doc
    }
}

impl Environment for TabularPomdp {
    fn n_obs(&self) -> usize {
        self.doc.n_obs
    }

    fn n_actions(&self) -> usize {
        self.doc.n_actions
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, usize) {
        let s = sample_categorical(&self.doc.pi0, rng);
        let o = sample_categorical(self.observation_row(s), rng);
        (EnvState::Tabular(s), o)
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        let s = match *state {
            EnvState::Tabular(s) if s < self.doc.n_states => s,
            _ => return Err(EnvError::ForeignState),
        };
        if action >= self.doc.n_actions {
            return Err(EnvError::InvalidAction {
                action,
                n_actions: self.doc.n_actions,
            });
        }
        let next = sample_categorical(self.transition_row(s, action), rng);
        let reward = self.reward(s, action, next);
        let obs = sample_categorical(self.observation_row(next), rng);
        Ok(Transition {
            state: EnvState::Tabular(next),
            reward,
            obs,
            terminal: self.doc.goal_obs == Some(obs),
        })
    }
}

/// Observation emitted at the unload end of the corridor.
pub const OBS_UNLOAD: usize = 0;
/// Observation emitted at the load end of the corridor.
pub const OBS_LOAD: usize = 1;
/// Observation emitted everywhere in between.
pub const OBS_CORRIDOR: usize = 2;
pub const ACTION_LEFT: usize = 0;
pub const ACTION_RIGHT: usize = 1;

/// State indexing of the load/unload corridor.
///
/// Location 0 is the unload cell and location `n_locations - 1` the load
/// cell. The end cells carry a single state each (arriving at the load
/// cell loads, arriving at the unload cell unloads); intermediate cells
/// carry an unloaded and a loaded state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadUnload {
    pub n_locations: usize,
}

impl LoadUnload {
    pub fn new(n_locations: usize) -> Result<Self, ModelError> {
        if n_locations < 2 {
            return Err(ModelError::TooFewLocations(n_locations));
        }
        Ok(Self { n_locations })
    }

    pub fn n_states(&self) -> usize {
        2 * self.n_locations - 2
    }

    /// State index of `(location, loaded)`; the flag is ignored at the ends.
    pub fn state(&self, location: usize, loaded: bool) -> usize {
        let last = self.n_locations - 1;
        if location == 0 {
            0
        } else if location == last {
            self.n_states() - 1
        } else {
            1 + 2 * (location - 1) + usize::from(loaded)
        }
    }

    /// Inverse of [`LoadUnload::state`].
    pub fn location(&self, state: usize) -> (usize, bool) {
        if state == 0 {
            (0, false)
        } else if state == self.n_states() - 1 {
            (self.n_locations - 1, true)
        } else {
            (1 + (state - 1) / 2, (state - 1) % 2 == 1)
        }
    }

    fn obs_of(&self, location: usize) -> usize {
        if location == 0 {
            OBS_UNLOAD
        } else if location == self.n_locations - 1 {
            OBS_LOAD
        } else {
            OBS_CORRIDOR
        }
    }

    /// Deterministic successor of `state` under `action`, with its reward.
    pub fn successor(&self, state: usize, action: usize) -> (usize, f64) {
        let (loc, loaded) = self.location(state);
        let last = self.n_locations - 1;
        let next_loc = if action == ACTION_LEFT {
            loc.saturating_sub(1)
        } else {
            (loc + 1).min(last)
        };
        if next_loc == 0 {
            let reward = if loaded && loc != 0 { 1.0 } else { 0.0 };
            (self.state(0, false), reward)
        } else if next_loc == last {
            (self.state(last, true), 0.0)
        } else {
            (self.state(next_loc, loaded), 0.0)
        }
    }
}

/// Builds the load/unload corridor with `n_locations` cells (discount 0.9).
///
/// The agent starts unloaded at the unload cell and earns 1 on each arrival
/// at the unload cell while loaded. It observes only which kind of cell it
/// is in.
pub fn make_load_unload(n_locations: usize) -> Result<TabularPomdp, ModelError> {
    let lu = LoadUnload::new(n_locations)?;
    let ns = lu.n_states();
    let (no, na) = (3, 2);
    let mut t = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na * ns];
    let mut b = vec![0.0; ns * no];
    for s in 0..ns {
        for a in 0..na {
            let (next, reward) = lu.successor(s, a);
            t[(s * na + a) * ns + next] = 1.0;
            r[(s * na + a) * ns + next] = reward;
        }
        b[s * no + lu.obs_of(lu.location(s).0)] = 1.0;
    }
    let mut pi0 = vec![0.0; ns];
    pi0[lu.state(0, false)] = 1.0;
    TabularPomdp::try_from(PomdpDocument {
        n_states: ns,
        n_obs: no,
        n_actions: na,
        gamma: 0.9,
        t,
        b,
        r,
        pi0,
        goal_obs: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn self_loop() -> TabularPomdp {
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

    #[test]
    fn load_unload_sizes() {
        for (locs, states) in [(8, 14), (5, 8), (2, 2)] {
            let m = make_load_unload(locs).unwrap();
            assert_eq!((m.n_states(), m.n_obs(), m.n_actions()), (states, 3, 2));
        }
        assert_eq!(make_load_unload(1), Err(ModelError::TooFewLocations(1)));
    }

    #[test]
    fn load_unload_state_count_matches_reachable_states() {
        // Hand-built simulator over (location, loaded) pairs, flag merged at the ends.
        for locs in 2..=8usize {
            let mut seen = Vec::new();
            let mut frontier = vec![(0usize, false)];
            while let Some((loc, loaded)) = frontier.pop() {
                if seen.contains(&(loc, loaded)) {
                    continue;
                }
                seen.push((loc, loaded));
                for step in [-1i64, 1] {
                    let next = (loc as i64 + step).clamp(0, locs as i64 - 1) as usize;
                    let flag = if next == locs - 1 {
                        true
                    } else if next == 0 {
                        false
                    } else {
                        loaded
                    };
                    frontier.push((next, flag));
                }
            }
            assert_eq!(seen.len(), make_load_unload(locs).unwrap().n_states());
        }
    }

    #[test]
    fn reset_starts_at_unload() {
        let m = make_load_unload(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(m.reset(&mut rng), (EnvState::Tabular(0), OBS_UNLOAD));
    }

    #[test]
    fn leaving_load_cell_keeps_load() {
        let m = make_load_unload(5).unwrap();
        let lu = LoadUnload::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = m
            .step(&EnvState::Tabular(lu.state(4, true)), ACTION_LEFT, &mut rng)
            .unwrap();
        assert_eq!(tr.state, EnvState::Tabular(lu.state(3, true)));
        assert_eq!(tr.reward, 0.0);
        assert_eq!(tr.obs, OBS_CORRIDOR);
        assert!(!tr.terminal);
    }

    #[test]
    fn round_trip_pays_once_on_arrival() {
        let m = make_load_unload(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut s, _) = m.reset(&mut rng);
        let plan = [1, 1, 1, 1, 0, 0, 0, 0];
        let mut rewards = Vec::new();
        for a in plan {
            let tr = m.step(&s, a, &mut rng).unwrap();
            rewards.push(tr.reward);
            s = tr.state;
        }
        assert_eq!(rewards, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s, EnvState::Tabular(0));
    }

    #[test]
    fn shuttle_rewards_arrive_on_schedule() {
        for locs in 2..=8usize {
            let m = make_load_unload(locs).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let (mut s, mut o) = m.reset(&mut rng);
            let mut going_right = true;
            let mut paid = Vec::new();
            for t in 0..(5 * (2 * locs - 2)) {
                if o == OBS_LOAD {
                    going_right = false;
                } else if o == OBS_UNLOAD {
                    going_right = true;
                }
                let a = if going_right { ACTION_RIGHT } else { ACTION_LEFT };
                let tr = m.step(&s, a, &mut rng).unwrap();
                if tr.reward > 0.0 {
                    paid.push(t);
                }
                s = tr.state;
                o = tr.obs;
            }
            let period = 2 * locs - 2;
            let expected: Vec<usize> = (1..=5).map(|k| k * period - 1).collect();
            assert_eq!(paid, expected, "locations = {locs}");
        }
    }

    #[test]
    fn two_cell_corridor_pays_every_other_step() {
        let m = make_load_unload(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut s, _) = m.reset(&mut rng);
        let mut rewards = Vec::new();
        for t in 0..6 {
            let tr = m.step(&s, if t % 2 == 0 { ACTION_RIGHT } else { ACTION_LEFT }, &mut rng).unwrap();
            rewards.push(tr.reward);
            s = tr.state;
        }
        assert_eq!(rewards, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn self_loop_is_stationary() {
        let m = self_loop();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, o) = m.reset(&mut rng);
        for _ in 0..10 {
            let tr = m.step(&s, 0, &mut rng).unwrap();
            assert_eq!((tr.state, tr.reward, tr.obs, tr.terminal), (s, 1.0, o, false));
        }
    }

    #[test]
    fn point_mass_reset() {
        let m = TabularPomdp::try_from(PomdpDocument {
            n_states: 3,
            n_obs: 2,
            n_actions: 1,
            gamma: 0.5,
            t: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            b: vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            r: vec![0.0; 9],
            pi0: vec![0.0, 1.0, 0.0],
            goal_obs: None,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            assert_eq!(m.reset(&mut rng), (EnvState::Tabular(1), 1));
        }
    }

    #[test]
    fn uniform_reset_frequencies() {
        let m = TabularPomdp::try_from(PomdpDocument {
            n_states: 2,
            n_obs: 1,
            n_actions: 1,
            gamma: 0.5,
            t: vec![1.0, 0.0, 0.0, 1.0],
            b: vec![1.0, 1.0],
            r: vec![0.0; 4],
            pi0: vec![0.5, 0.5],
            goal_obs: None,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| m.reset(&mut rng).0 == EnvState::Tabular(0))
            .count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((zeros as f64 - n as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut doc = self_loop().into_document();
        doc.t = vec![0.9];
        let err = TabularPomdp::try_from(doc.clone()).unwrap_err();
        assert!(alloc::format!("{err}").contains("T(s=0, a=0, .)"));
        doc.t = vec![1.0];
        doc.b = vec![-1.0];
        assert!(matches!(
            TabularPomdp::try_from(doc.clone()),
            Err(ModelError::BadEntry { .. })
        ));
        doc.b = vec![1.0];
        doc.gamma = 1.0;
        assert_eq!(TabularPomdp::try_from(doc), Err(ModelError::Discount(1.0)));
    }

    #[test]
    fn goal_states_must_absorb() {
        let doc = PomdpDocument {
            n_states: 2,
            n_obs: 2,
            n_actions: 1,
            gamma: 0.9,
            t: vec![0.0, 1.0, 1.0, 0.0],
            b: vec![1.0, 0.0, 0.0, 1.0],
            r: vec![0.0; 4],
            pi0: vec![1.0, 0.0],
            goal_obs: Some(1),
        };
        assert_eq!(
            TabularPomdp::try_from(doc.clone()),
            Err(ModelError::GoalNotAbsorbing { state: 1, action: 0 })
        );
        let mut fixed = doc;
        fixed.t = vec![0.0, 1.0, 0.0, 1.0];
        let m = TabularPomdp::try_from(fixed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = m.step(&EnvState::Tabular(0), 0, &mut rng).unwrap();
        assert!(tr.terminal);
    }

    #[test]
    fn rejects_out_of_range_action() {
        let m = make_load_unload(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            m.step(&EnvState::Tabular(0), 2, &mut rng),
            Err(EnvError::InvalidAction { action: 2, n_actions: 2 })
        );
    }
}
