//! A miniature serverless-workflow runtime where functions fire on data
//! availability instead of orchestrator commands. Containers are split into a
//! compute half (FLU) and a data half (DLU) so output transfer overlaps the
//! next invocation; intermediate data streams chunk-by-chunk into per-node
//! sinks that match it against declared inputs. A transfer-pressure rule
//! blocks producers whose data outlives their compute and scales the pool
//! instead. Everything runs on a deterministic virtual clock, next to a
//! classic store-and-trigger baseline for paired comparisons.

pub mod container;
pub mod engine;
pub mod harness;
pub mod num;
pub mod sim;
pub mod sink;
pub mod units;
pub mod wire;
pub mod workflow;

/// Smoothed scalar at the precision the runtime uses everywhere.
pub type Ewma64 = num::Ewma<f64>;

/// Seconds of pressure for a transfer of `size_bytes` at `bandwidth_bps`
/// against a FLU that takes `t_flu` seconds.
pub fn pressure64(size_bytes: u64, bandwidth_bps: u64, t_flu: f64, alpha: f64) -> f64 {
    num::transfer_pressure(size_bytes, bandwidth_bps, t_flu, alpha)
}
