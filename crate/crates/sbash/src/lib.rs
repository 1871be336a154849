//! IO companion to `sbash-core`: file formats, HTTP backends, the TCP
//! session listener, threat-intelligence logging, the evaluation runner,
//! and the `sbash` command-line entry point.

pub mod backend;
pub mod capture;
pub mod cli;
pub mod evalrun;
pub mod jsonlog;
pub mod listener;
pub mod profilefs;
pub mod storefs;

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sbash_core::clock::Clock;

/// Wall/monotonic clock backed by the operating system.
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn monotonic_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn epoch_secs(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    }
}

/// RFC 3339 UTC timestamp for log records.
pub fn rfc3339(epoch_secs: i64) -> String {
    let c = sbash_core::timefmt::civil_from_epoch(epoch_secs);
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
        c.year, c.month, c.day, c.hour, c.minute, c.second
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_formats_known_instant() {
        assert_eq!(rfc3339(0), "1970-01-01T00:00:00Z");
        assert_eq!(rfc3339(1_786_147_200), "2026-08-08T00:00:00Z");
    }

    #[test]
    fn system_clock_advances() {
        let clock = SystemClock::new();
        let a = clock.monotonic_ms();
        std::thread::sleep(std::time::Duration::from_millis(5));
        assert!(clock.monotonic_ms() >= a + 4);
        assert!(clock.epoch_secs() > 1_700_000_000);
    }
}
