//! Token-bucket pacing for container egress.
//!
//! State is kept in scaled units (bits times NANOS_PER_SEC) so refills over
//! integer-nanosecond windows are exact and rounding never accumulates: a
//! waiting acquire carries the fractional remainder into the bucket, so a
//! 5e6-byte stream over 40 Mbps takes exactly 1.0 s of simulated time.

use crate::units::{Nanos, NANOS_PER_SEC};

use super::WireError;

const SCALE: u128 = NANOS_PER_SEC as u128;

#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate_bps: u64,
    burst_bits: u64,
    /// Available tokens in bit-nanoseconds (bits * 1e9).
    level_scaled: u128,
    /// Time up to which tokens have been accounted; also the earliest instant
    /// the next grant can happen (reservation semantics).
    last: Nanos,
}

impl TokenBucket {
    /// `initial_bits` is clamped to the burst. Buckets start empty unless told
    /// otherwise.
    pub fn new(rate_bps: u64, burst_bits: u64, initial_bits: u64) -> Self {
        assert!(rate_bps > 0, "token bucket needs a positive rate");
        TokenBucket {
            rate_bps,
            burst_bits,
            level_scaled: (initial_bits.min(burst_bits) as u128) * SCALE,
            last: 0,
        }
    }

    pub fn rate_bps(&self) -> u64 {
        self.rate_bps
    }

    pub fn burst_bits(&self) -> u64 {
        self.burst_bits
    }

    /// Whole tokens currently accounted for (floor).
    pub fn level_bits(&self) -> u64 {
        (self.level_scaled / SCALE) as u64
    }

    /// Reserve `bits` and return how long the caller must wait from `now`
    /// until the grant. Zero when the bucket already holds enough. The caller
    /// is expected to call again no earlier than `now + wait`.
    pub fn acquire(&mut self, bits: u64, now: Nanos) -> Result<Nanos, WireError> {
        if bits > self.burst_bits {
            return Err(WireError::RequestTooLarge {
                bits,
                burst: self.burst_bits,
            });
        }
        let t = now.max(self.last);
        let refill = (self.rate_bps as u128) * ((t - self.last) as u128);
        let cap = (self.burst_bits as u128) * SCALE;
        self.level_scaled = (self.level_scaled + refill).min(cap);
        self.last = t;
        let need = (bits as u128) * SCALE;
        if self.level_scaled >= need {
            self.level_scaled -= need;
            return Ok(t - now);
        }
        let deficit = need - self.level_scaled;
        let rate = self.rate_bps as u128;
        let wait = deficit.div_ceil(rate) as Nanos;
        // Consume the tokens that accrue during the wait; keep the remainder.
        self.level_scaled = self.level_scaled + rate * wait as u128 - need;
        self.last = t + wait;
        Ok(t + wait - now)
    }
}
