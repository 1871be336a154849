//! Injected time source.
//!
//! The pipeline measures per-command latency and stamps filesystem
//! mutations, but the core crate has no clock of its own. Callers inject
//! one; tests inject a fixed or scripted clock so every code path is
//! reproducible.

use core::cell::Cell;

/// A time source with a monotonic counter (for latency) and a wall clock
/// (for timestamps). Both are injected so core stays deterministic.
pub trait Clock {
    /// Milliseconds from an arbitrary monotonic origin.
    fn monotonic_ms(&self) -> u64;

    /// Seconds since the Unix epoch.
    fn epoch_secs(&self) -> i64;
}

/// Fixed-point clock for tests. `advance_ms` moves both readings forward.
#[derive(Debug, Default)]
pub struct FixedClock {
    mono_ms: Cell<u64>,
    epoch_secs: Cell<i64>,
}

impl FixedClock {
    pub fn new(mono_ms: u64, epoch_secs: i64) -> Self {
        Self {
            mono_ms: Cell::new(mono_ms),
            epoch_secs: Cell::new(epoch_secs),
        }
    }

    pub fn advance_ms(&self, delta: u64) {
        self.mono_ms.set(self.mono_ms.get() + delta);
        self.epoch_secs
            .set(self.epoch_secs.get() + (delta / 1000) as i64);
    }
}

impl Clock for FixedClock {
    fn monotonic_ms(&self) -> u64 {
        self.mono_ms.get()
    }

    fn epoch_secs(&self) -> i64 {
        self.epoch_secs.get()
    }
}
