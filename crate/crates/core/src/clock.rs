//! Time sources.
//!
//! Everything that reads the time or waits goes through [`Clock`], so the
//! simulator can run whole sessions on a [`VirtualClock`] faster than real
//! time while every timestamp and duration stays exact.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Milliseconds since the clock's epoch (session start).
    fn now_ms(&self) -> f64;

    /// Blocks (or, for virtual clocks, advances time) for `ms` milliseconds.
    fn sleep_ms(&self, ms: u64);
}

pub type SharedClock = Arc<dyn Clock>;

/// Wall clock anchored at construction.
#[derive(Debug, Clone)]
pub struct SystemClock {
    epoch: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
        }
    }

    pub fn shared() -> SharedClock {
        Arc::new(Self::new())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Manually advanced clock with microsecond resolution.
///
/// Clones share the same underlying time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    micros: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance_ms(&self, ms: u64) {
        self.micros.fetch_add(ms * 1000, Ordering::AcqRel);
    }

    /// Moves time forward to `ms`; never moves it backwards.
    pub fn advance_to_ms(&self, ms: u64) {
        self.micros.fetch_max(ms * 1000, Ordering::AcqRel);
    }

    pub fn now_whole_ms(&self) -> u64 {
        self.micros.load(Ordering::Acquire) / 1000
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> f64 {
        self.micros.load(Ordering::Acquire) as f64 / 1000.0
    }

    fn sleep_ms(&self, ms: u64) {
        self.advance_ms(ms);
    }
}
