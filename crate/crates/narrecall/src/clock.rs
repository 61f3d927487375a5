//! Wall-clock abstraction so event logs and manifests can be made
//! reproducible in tests.

use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Duration, SecondsFormat, Utc};

pub trait Clock: Send + Sync {
    /// Current time as RFC 3339 UTC with millisecond precision.
    fn now(&self) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

/// Deterministic clock: every call advances by a fixed step.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    step_ms: i64,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            start,
            step_ms,
            ticks: AtomicU64::new(0),
        }
    }

    /// Starts at 2024-01-01T00:00:00Z and advances one second per call.
    pub fn fixed() -> Self {
        let start = DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z")
            .expect("valid literal")
            .with_timezone(&Utc);
        Self::new(start, 1000)
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> String {
        let k = self.ticks.fetch_add(1, Ordering::SeqCst) as i64;
        (self.start + Duration::milliseconds(k * self.step_ms))
            .to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock_advances() {
        let c = SteppingClock::fixed();
        assert_eq!(c.now(), "2024-01-01T00:00:00.000Z");
        assert_eq!(c.now(), "2024-01-01T00:00:01.000Z");
    }

    #[test]
    fn timestamps_sort_lexically() {
        let c = SteppingClock::fixed();
        let a = c.now();
        let b = c.now();
        assert!(a < b);
    }
}
