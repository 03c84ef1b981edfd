//! Tick sources for learning curves.

use std::time::{Duration, Instant};

use fsc_core::curve::{Clock, WorkClock};
use serde::{Deserialize, Serialize};

/// Which tick source a run records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    /// Deterministic work units (environment steps, solver multiply-adds).
    #[default]
    Work,
    /// Monotonic wall-clock nanoseconds. Hardware dependent.
    Wall,
}

/// Monotonic nanosecond counter that only advances while resumed.
#[derive(Clone, Debug, Default)]
pub struct WallClock {
    elapsed: Duration,
    running_since: Option<Instant>,
}

impl WallClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn elapsed(&self) -> Duration {
        self.elapsed + self.running_since.map_or(Duration::ZERO, |t| t.elapsed())
    }
}

impl Clock for WallClock {
    fn resume(&mut self) {
        if self.running_since.is_none() {
            self.running_since = Some(Instant::now());
        }
    }

    fn pause(&mut self) {
        if let Some(t) = self.running_since.take() {
            self.elapsed += t.elapsed();
        }
    }

    fn ticks(&self, _work: u64) -> u64 {
        u64::try_from(self.elapsed().as_nanos()).unwrap_or(u64::MAX)
    }
}

/// Either clock, chosen at run time.
#[derive(Clone, Debug)]
pub enum RunClock {
    Work(WorkClock),
    Wall(WallClock),
}

impl RunClock {
    pub fn new(kind: ClockKind) -> Self {
        match kind {
            ClockKind::Work => Self::Work(WorkClock),
            ClockKind::Wall => Self::Wall(WallClock::new()),
        }
    }
}

impl Clock for RunClock {
    fn resume(&mut self) {
        match self {
            Self::Work(c) => c.resume(),
            Self::Wall(c) => c.resume(),
        }
    }

    fn pause(&mut self) {
        match self {
            Self::Work(c) => c.pause(),
            Self::Wall(c) => c.pause(),
        }
    }

    fn ticks(&self, work: u64) -> u64 {
        match self {
            Self::Work(c) => c.ticks(work),
            Self::Wall(c) => c.ticks(work),
        }
    }
}
