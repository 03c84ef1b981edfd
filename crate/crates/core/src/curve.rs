//! Learning curves and the tick sources they are measured with.

use alloc::vec::Vec;

/// One evaluation point of a learning run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    /// Trials (or exact-gradient iterations) completed so far.
    pub trial: u64,
    /// Learning time spent so far, in the units of the run's [`Clock`].
    pub ticks: u64,
    pub performance: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearnCurve {
    pub points: Vec<CurvePoint>,
}

impl LearnCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, p: CurvePoint) {
        self.points.push(p);
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// First point whose performance reaches `threshold`, if any.
    pub fn first_reaching(&self, threshold: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.performance >= threshold)
    }
}

/// Source of learning-time ticks.
///
/// Learners call [`Clock::pause`] while evaluating so that evaluation cost
/// is not charged to learning, and pass their own deterministic work
/// counter to [`Clock::ticks`].
pub trait Clock {
    fn resume(&mut self) {}
    fn pause(&mut self) {}
    fn ticks(&self, work: u64) -> u64;
}

/// Reports the learner's work counter (environment steps, solver backups).
/// Fully deterministic.
#[derive(Clone, Copy, Debug, Default)]
pub struct WorkClock;

impl Clock for WorkClock {
    fn ticks(&self, work: u64) -> u64 {
        work
    }
}

impl<C: Clock + ?Sized> Clock for &mut C {
    fn resume(&mut self) {
        (**self).resume()
    }

    fn pause(&mut self) {
        (**self).pause()
    }

    fn ticks(&self, work: u64) -> u64 {
        (**self).ticks(work)
    }
}
