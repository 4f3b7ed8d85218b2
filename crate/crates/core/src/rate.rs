//! Send-rate limiting with a small token bucket.

use std::sync::Mutex;
use std::time::Duration;

use crate::clock::Clock;

const NANOS: u128 = 1_000_000_000;
/// Preamble, start delimiter, FCS and inter-frame gap.
pub const ETHERNET_OVERHEAD: u64 = 24;
/// Shortest Ethernet frame without FCS; shorter frames are padded.
pub const MIN_FRAME: u64 = 60;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RateError {
    #[error("rate must be positive")]
    Zero,
    #[error("{bps} bit/s cannot carry a single {frame}-byte probe per second")]
    BandwidthTooLow { bps: u64, frame: u64 },
    #[error("malformed bandwidth `{0}` (expected e.g. 100M, 1.5G, 64000)")]
    MalformedBandwidth(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMode {
    Pps(u64),
    Bps(u64),
    Unlimited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatePolicy {
    pub mode: RateMode,
    /// Probes requested per token acquisition.
    pub batch: u64,
}

impl RatePolicy {
    pub fn pps(pps: u64) -> Self {
        RatePolicy {
            mode: RateMode::Pps(pps),
            batch: 32,
        }
    }

    pub fn bps(bps: u64) -> Self {
        RatePolicy {
            mode: RateMode::Bps(bps),
            batch: 32,
        }
    }

    pub fn unlimited() -> Self {
        RatePolicy {
            mode: RateMode::Unlimited,
            batch: 256,
        }
    }

    pub fn with_batch(mut self, batch: u64) -> Self {
        self.batch = batch.max(1);
        self
    }

    /// Packets per second for probes of `frame_bytes` (without Ethernet
    /// overhead); `None` when unlimited.
    pub fn effective_pps(&self, frame_bytes: u64) -> Result<Option<u64>, RateError> {
        match self.mode {
            RateMode::Unlimited => Ok(None),
            RateMode::Pps(0) | RateMode::Bps(0) => Err(RateError::Zero),
            RateMode::Pps(p) => Ok(Some(p)),
            RateMode::Bps(b) => bps_to_pps(b, frame_bytes).map(Some),
        }
    }
}

/// `floor(bps / (8 × (frame + overhead)))`, with frames padded to the
/// Ethernet minimum.
pub fn bps_to_pps(bps: u64, frame_bytes: u64) -> Result<u64, RateError> {
    let on_wire = frame_bytes.max(MIN_FRAME) + ETHERNET_OVERHEAD;
    match bps / (8 * on_wire) {
        0 => Err(RateError::BandwidthTooLow {
            bps,
            frame: frame_bytes,
        }),
        pps => Ok(pps),
    }
}

/// Parses `64000`, `100K`, `1.5M`, `10G` (decimal multipliers).
pub fn parse_bandwidth(text: &str) -> Result<u64, RateError> {
    let t = text.trim();
    let err = || RateError::MalformedBandwidth(text.to_string());
    let (num, mult) = match t.char_indices().last().ok_or_else(err)? {
        (i, 'k' | 'K') => (&t[..i], 1e3),
        (i, 'm' | 'M') => (&t[..i], 1e6),
        (i, 'g' | 'G') => (&t[..i], 1e9),
        _ => (t, 1.0),
    };
    if let Ok(v) = num.parse::<u64>() {
        return v.checked_mul(mult as u64).ok_or_else(err);
    }
    let v: f64 = num.parse().map_err(|_| err())?;
    if !v.is_finite() || v < 0.0 || v * mult > u64::MAX as f64 {
        return Err(err());
    }
    Ok((v * mult).round() as u64)
}

/// Result of one acquisition: `granted` tokens are spent; when zero, `wait`
/// says how long until the next one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grant {
    pub granted: u64,
    pub wait: Duration,
}

#[derive(Debug)]
struct BucketState {
    /// Tokens scaled by 10^9 so refill is exact in integer nanoseconds.
    scaled: u128,
    last: Duration,
}

/// Shared token bucket. Capacity is `max(batch, pps/100)` — about 10 ms of
/// sending — and the bucket starts full.
#[derive(Debug)]
pub struct TokenBucket {
    pps: Option<u64>,
    capacity: u64,
    state: Mutex<BucketState>,
}

impl TokenBucket {
    pub fn new(pps: Option<u64>, batch: u64, now: Duration) -> Self {
        let capacity = pps.map_or(u64::MAX, |p| batch.max(p / 100).max(1));
        TokenBucket {
            pps,
            capacity,
            state: Mutex::new(BucketState {
                scaled: capacity as u128 * NANOS,
                last: now,
            }),
        }
    }

    pub fn from_policy(policy: &RatePolicy, frame_bytes: u64, now: Duration) -> Result<Self, RateError> {
        Ok(Self::new(policy.effective_pps(frame_bytes)?, policy.batch, now))
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn pps(&self) -> Option<u64> {
        self.pps
    }

    pub fn tokens_acquire(&self, n: u64, clock: &dyn Clock) -> Grant {
        let Some(pps) = self.pps else {
            return Grant {
                granted: n,
                wait: Duration::ZERO,
            };
        };
        let now = clock.now();
        let mut st = self.state.lock().expect("rate bucket poisoned");
        if now > st.last {
            let refill = (now - st.last).as_nanos() * pps as u128;
            st.scaled = (st.scaled + refill).min(self.capacity as u128 * NANOS);
            st.last = now;
        }
        let granted = (st.scaled / NANOS).min(n as u128) as u64;
        st.scaled -= granted as u128 * NANOS;
        let wait = if granted == 0 {
            let missing = NANOS - st.scaled;
            Duration::from_nanos(missing.div_ceil(pps as u128) as u64)
        } else {
            Duration::ZERO
        };
        Grant { granted, wait }
    }

    /// Acquires at least one token, sleeping on `clock` as needed.
    pub fn acquire_blocking(&self, n: u64, clock: &dyn Clock) -> u64 {
        loop {
            let g = self.tokens_acquire(n, clock);
            if g.granted > 0 {
                return g.granted;
            }
            clock.sleep_until(clock.now() + g.wait);
        }
    }
}
