//! Scalar kernels shared by the scheduler and the metrics pipeline.
//!
//! These are generic over the float type; everything else in the crate runs
//! on integer nanoseconds. The crate root exports `f64` aliases.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the kernels below.
pub trait Real: Float + FromPrimitive {}

impl<T: Float + FromPrimitive> Real for T {}

/// Exponentially weighted moving average: `new = beta * sample + (1 - beta) * old`.
/// The first sample initializes the average directly.
#[derive(Debug, Clone, Copy)]
pub struct Ewma<F> {
    beta: F,
    value: Option<F>,
}

impl<F: Real> Ewma<F> {
    pub fn new(beta: F) -> Self {
        Ewma { beta, value: None }
    }

    pub fn observe(&mut self, sample: F) {
        self.value = Some(match self.value {
            None => sample,
            Some(old) => self.beta * sample + (F::one() - self.beta) * old,
        });
    }

    pub fn value(&self) -> Option<F> {
        self.value
    }

    /// Current average, or zero before any sample (cold start reads as zero).
    pub fn value_or_zero(&self) -> F {
        self.value.unwrap_or_else(F::zero)
    }

    pub fn samples_seen(&self) -> bool {
        self.value.is_some()
    }
}

/// Transfer pressure of an emission: `alpha * (8 * size_bytes / bandwidth_bps) - t_flu`,
/// all in seconds. Positive pressure means the communication outlasts the
/// compute it can hide behind.
pub fn transfer_pressure<F: Real>(size_bytes: u64, bandwidth_bps: u64, t_flu: F, alpha: F) -> F {
    let bits = F::from_u128(size_bytes as u128 * 8).unwrap();
    let bw = F::from_u64(bandwidth_bps).unwrap();
    alpha * (bits / bw) - t_flu
}

/// Nearest-rank percentile over an ascending-sorted slice. `pct` in (0, 100].
pub fn percentile_nearest_rank<F: Real>(sorted: &[F], pct: f64) -> Option<F> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}
