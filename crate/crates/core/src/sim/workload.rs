//! Load generation: arrival patterns and deterministic request inputs.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::units::{parse_duration, Nanos, NANOS_PER_SEC};

/// How requests are issued.
///
/// Open-loop arrivals are exactly periodic at 60/rpm seconds. Closed-loop
/// clients each hold one request in flight and reissue on completion. Burst
/// runs at `low_rpm` until `switch_at`, then at `high_rpm` for another
/// `switch_at` (total duration 2x the switch time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    Open { rpm: f64, duration: Nanos },
    Closed { clients: u64, duration: Nanos },
    Burst { low_rpm: f64, high_rpm: f64, switch_at: Nanos },
}

impl Pattern {
    pub fn duration(&self) -> Nanos {
        match *self {
            Pattern::Open { duration, .. } | Pattern::Closed { duration, .. } => duration,
            Pattern::Burst { switch_at, .. } => 2 * switch_at,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, Pattern::Closed { .. })
    }

    /// Number of requests issued at t=0 before any completion feedback.
    pub fn initial_arrivals(&self) -> u64 {
        match *self {
            Pattern::Closed { clients, .. } => clients,
            _ => 1,
        }
    }

    /// For rate-driven patterns: the arrival after one at `prev`, if it still
    /// falls inside the window. Closed-loop arrivals are completion-driven
    /// and never come from here.
    pub fn next_arrival(&self, prev: Nanos) -> Option<Nanos> {
        let gap = |rpm: f64| -> Nanos { (60.0 * NANOS_PER_SEC as f64 / rpm).round() as Nanos };
        let next = match *self {
            Pattern::Closed { .. } => return None,
            Pattern::Open { rpm, .. } => prev + gap(rpm),
            Pattern::Burst {
                low_rpm,
                high_rpm,
                switch_at,
            } => {
                let t = prev + gap(low_rpm);
                if t < switch_at {
                    t
                } else {
                    // Past the switch the high rate takes over immediately.
                    prev.max(switch_at.saturating_sub(gap(high_rpm))) + gap(high_rpm)
                }
            }
        };
        (next < self.duration()).then_some(next)
    }
}

/// Formats: `open:<rpm>:<dur>`, `closed:<clients>:<dur>`,
/// `burst:<lo>:<hi>:<t>`. Rates accept a trailing `rpm`.
pub fn parse_pattern(text: &str) -> Result<Pattern, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let rate = |s: &str| -> Result<f64, String> {
        let s = s.strip_suffix("rpm").unwrap_or(s);
        let v: f64 = s.parse().map_err(|_| format!("bad rate {s:?}"))?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(format!("rate must be positive, got {v}"))
        }
    };
    match parts.as_slice() {
        ["open", rpm, dur] => Ok(Pattern::Open {
            rpm: rate(rpm)?,
            duration: parse_duration(dur).map_err(|e| e.to_string())?,
        }),
        ["closed", clients, dur] => {
            let clients: u64 = clients
                .parse()
                .map_err(|_| format!("bad client count {clients:?}"))?;
            if clients == 0 {
                return Err("closed loop needs at least 1 client".into());
            }
            Ok(Pattern::Closed {
                clients,
                duration: parse_duration(dur).map_err(|e| e.to_string())?,
            })
        }
        ["burst", lo, hi, t] => Ok(Pattern::Burst {
            low_rpm: rate(lo)?,
            high_rpm: rate(hi)?,
            switch_at: parse_duration(t).map_err(|e| e.to_string())?,
        }),
        _ => Err(format!(
            "unrecognized pattern {text:?} (want open:<rpm>:<dur>, closed:<clients>:<dur>, or burst:<lo>:<hi>:<t>)"
        )),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Request payload for (seed, index): reproducible, distinct per index.
pub fn request_input(seed: u64, index: u64, size: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)));
    let mut bytes = vec![0u8; size as usize];
    rng.fill_bytes(&mut bytes);
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::secs;

    #[test]
    fn open_pattern_is_exactly_periodic() {
        let p = parse_pattern("open:10rpm:120s").unwrap();
        assert_eq!(
            p,
            Pattern::Open {
                rpm: 10.0,
                duration: secs(120)
            }
        );
        let mut arrivals = vec![0u64];
        while let Some(t) = p.next_arrival(*arrivals.last().unwrap()) {
            arrivals.push(t);
        }
        // 10 rpm over 2 minutes: 0, 6, 12, ..., 114 s.
        assert_eq!(arrivals.len(), 20);
        assert_eq!(arrivals[1], secs(6));
        assert_eq!(*arrivals.last().unwrap(), secs(114));
    }

    #[test]
    fn burst_switches_rate_at_the_boundary() {
        let p = parse_pattern("burst:10:60:30s").unwrap();
        assert_eq!(p.duration(), secs(60));
        let mut arrivals = vec![0u64];
        while let Some(t) = p.next_arrival(*arrivals.last().unwrap()) {
            arrivals.push(t);
        }
        // Low phase: 0, 6, 12, 18, 24 s; high phase: every second from 30 s.
        assert_eq!(&arrivals[..5], &[0, secs(6), secs(12), secs(18), secs(24)]);
        assert_eq!(arrivals[5], secs(30));
        assert_eq!(arrivals[6], secs(31));
        assert_eq!(*arrivals.last().unwrap(), secs(59));
    }

    #[test]
    fn closed_pattern_counts_clients() {
        let p = parse_pattern("closed:8:60s").unwrap();
        assert_eq!(p.initial_arrivals(), 8);
        assert!(p.is_closed());
        assert_eq!(p.next_arrival(0), None);
    }

    #[test]
    fn bad_patterns_are_rejected() {
        assert!(parse_pattern("open:0:60s").is_err());
        assert!(parse_pattern("closed:0:60s").is_err());
        assert!(parse_pattern("poisson:10:60s").is_err());
        assert!(parse_pattern("open:10").is_err());
    }

    #[test]
    fn inputs_are_reproducible_and_distinct() {
        let a = request_input(7, 0, 64);
        let b = request_input(7, 0, 64);
        let c = request_input(7, 1, 64);
        let d = request_input(8, 0, 64);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.len(), 64);
    }
}
