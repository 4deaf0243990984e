use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

/// Monotonic time source used for runtime records.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Elapsed wall-clock time since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Advances by a fixed step on every reading. Makes runtime records
/// reproducible and exposes how many readings a timed span contains.
#[derive(Debug)]
pub struct StepClock {
    step: Duration,
    ticks: AtomicU64,
}

impl StepClock {
    pub fn new(step: Duration) -> Self {
        Self {
            step,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Clock for StepClock {
    fn now(&self) -> Duration {
        let n = self.ticks.fetch_add(1, Ordering::Relaxed) + 1;
        self.step * n as u32
    }
}

/// Seconds at millisecond resolution.
pub(crate) fn to_millis_seconds(d: Duration) -> f64 {
    (d.as_secs_f64() * 1000.0).round() / 1000.0
}
