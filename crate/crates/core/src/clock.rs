//! Time sources. The engine and rate limiter only see [`Clock`], so tests
//! run on [`SimClock`] without waiting.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;
    /// Blocks (or, for simulated time, jumps) until `now() >= deadline`.
    fn sleep_until(&self, deadline: Duration);
    /// Whether time only moves when someone sleeps.
    fn is_simulated(&self) -> bool {
        false
    }
}

#[derive(Debug)]
pub struct RealClock {
    origin: Instant,
}

impl RealClock {
    pub fn new() -> Self {
        RealClock {
            origin: Instant::now(),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) {
        loop {
            let now = self.now();
            if now >= deadline {
                return;
            }
            let left = deadline - now;
            // short waits spin; the scheduler's granularity is too coarse
            if left > Duration::from_micros(200) {
                std::thread::sleep(left - Duration::from_micros(100));
            } else {
                std::hint::spin_loop();
            }
        }
    }
}

/// Virtual time in nanoseconds. Sleeping advances the clock immediately;
/// concurrent sleepers never move it backwards.
#[derive(Debug, Default)]
pub struct SimClock {
    ns: AtomicU64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.ns.fetch_add(by.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.ns.load(Ordering::SeqCst))
    }

    fn sleep_until(&self, deadline: Duration) {
        self.ns.fetch_max(deadline.as_nanos() as u64, Ordering::SeqCst);
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_is_monotone() {
        let c = SimClock::new();
        c.sleep_until(Duration::from_secs(2));
        c.sleep_until(Duration::from_secs(1));
        assert_eq!(c.now(), Duration::from_secs(2));
        c.advance(Duration::from_millis(5));
        assert_eq!(c.now(), Duration::from_millis(2005));
    }

    #[test]
    fn real_clock_sleeps() {
        let c = RealClock::new();
        let target = c.now() + Duration::from_millis(2);
        c.sleep_until(target);
        assert!(c.now() >= target);
    }
}
