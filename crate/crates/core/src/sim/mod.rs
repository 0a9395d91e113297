//! Discrete-event execution of workflows on a simulated cluster.
//!
//! Two engines share the same clock, workload, and resource model:
//! [`dataflow`] triggers functions by data availability and streams outputs
//! through per-node sinks, [`baseline`] sequences the same DAG through a
//! central orchestrator with store-and-forward transfers. Time is integer
//! nanoseconds; ties are broken by insertion order, so a run is a pure
//! function of its inputs and the event log can be compared byte for byte.

pub mod baseline;
pub mod dataflow;
pub mod metrics;
pub mod queue;
pub mod workload;

pub use metrics::{percentile, RequestRecord, RunMetrics};
pub use queue::EventQueue;
pub use workload::{parse_pattern, request_input, Pattern};

use serde::Deserialize;

use crate::units::{millis, secs, Nanos};
use crate::workflow::{Placement, WorkflowDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Events fire as fast as the loop runs; time is purely logical.
    Virtual,
    /// Identical event order, but the loop sleeps until each event's wall
    /// offset. Results match Virtual exactly.
    Real,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub cores: f64,
    pub memory_mb: u64,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, cores: f64, memory_mb: u64) -> Self {
        NodeSpec {
            name: name.into(),
            cores,
            memory_mb,
        }
    }
}

/// Everything one run needs besides policy knobs.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup<'a> {
    pub def: &'a WorkflowDefinition,
    pub nodes: &'a [NodeSpec],
    pub placement: &'a Placement,
    pub pattern: Pattern,
    pub input_size: u64,
    pub seed: u64,
}

/// Policy and timing knobs. Defaults are the shipped profile; tests pin
/// individual fields.
#[derive(Debug, Clone)]
pub struct RuntimeTuning {
    /// Safety factor on estimated transfer time in the pressure formula.
    pub alpha: f64,
    /// Pressure-driven blocking and scaling on the data path.
    pub pressure_enabled: bool,
    /// Release sink entries as soon as their consumer finishes; otherwise
    /// everything is held until the request completes.
    pub proactive_release: bool,
    /// Idle age after which a sink entry spills out of memory.
    pub ttl: Nanos,
    pub ttl_sweep: Nanos,
    /// Container keep-alive; reclaim only when idle and fully drained.
    pub keepalive: Nanos,
    pub cold_start: Nanos,
    /// Orchestrator hop cost in the control-flow engine.
    pub trigger_overhead: Nanos,
    /// Checkpoint cadence on receiving sinks: every N acked chunks or
    /// whenever the window since the last checkpoint exceeds the interval.
    pub checkpoint_chunks: u64,
    pub checkpoint_interval: Nanos,
    /// A request that has not completed this long after submit fails.
    pub deadline: Nanos,
    /// Backoff before an interrupted transfer reopens and replays.
    pub retry_delay: Nanos,
    /// Completed-request bookkeeping is dropped after this horizon.
    pub gc_horizon: Nanos,
    /// Keep terminal output bytes in the request records.
    pub record_outputs: bool,
    pub clock: ClockMode,
}

impl Default for RuntimeTuning {
    fn default() -> Self {
        RuntimeTuning {
            alpha: 1.1,
            pressure_enabled: true,
            proactive_release: true,
            ttl: secs(30),
            ttl_sweep: secs(1),
            keepalive: secs(900),
            cold_start: millis(500),
            trigger_overhead: millis(63),
            checkpoint_chunks: 8,
            checkpoint_interval: millis(100),
            deadline: secs(120),
            retry_delay: millis(10),
            gc_horizon: secs(60),
            record_outputs: false,
            clock: ClockMode::Virtual,
        }
    }
}

/// Scripted failures. Transfer faults drop the n-th streaming chunk delivery
/// of the run (0-based, counted across all flows); compute faults kill the
/// named function's invocation for a given request index one tenth of the
/// way into its execution.
#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    pub drop_deliveries: Vec<u64>,
    pub kill_flu: Vec<(String, u64)>,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    pub fn drop_delivery(index: u64) -> Self {
        FaultPlan {
            drop_deliveries: vec![index],
            ..FaultPlan::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.drop_deliveries.is_empty() && self.kill_flu.is_empty()
    }

    /// Consume a transfer fault scheduled for this delivery index.
    pub fn take_drop(&mut self, delivery_index: u64) -> bool {
        if let Some(pos) = self.drop_deliveries.iter().position(|&i| i == delivery_index) {
            self.drop_deliveries.swap_remove(pos);
            true
        } else {
            false
        }
    }

    /// Consume a compute fault scheduled for (function, request index).
    pub fn take_kill(&mut self, function: &str, request_index: u64) -> bool {
        if let Some(pos) = self
            .kill_flu
            .iter()
            .position(|(f, i)| f == function && *i == request_index)
        {
            self.kill_flu.swap_remove(pos);
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tuning_is_the_shipped_profile() {
        let t = RuntimeTuning::default();
        assert_eq!(t.alpha, 1.1);
        assert_eq!(t.ttl, secs(30));
        assert_eq!(t.keepalive, secs(900));
        assert_eq!(t.cold_start, millis(500));
        assert_eq!(t.trigger_overhead, millis(63));
        assert_eq!(t.checkpoint_chunks, 8);
        assert_eq!(t.checkpoint_interval, millis(100));
        assert_eq!(t.deadline, secs(120));
        assert_eq!(t.retry_delay, millis(10));
        assert!(t.pressure_enabled);
        assert!(t.proactive_release);
        assert_eq!(t.clock, ClockMode::Virtual);
    }

    #[test]
    fn fault_plan_entries_fire_once() {
        let mut plan = FaultPlan {
            drop_deliveries: vec![3],
            kill_flu: vec![("f".into(), 2)],
        };
        assert!(!plan.take_drop(2));
        assert!(plan.take_drop(3));
        assert!(!plan.take_drop(3));
        assert!(!plan.take_kill("f", 1));
        assert!(plan.take_kill("f", 2));
        assert!(!plan.take_kill("f", 2));
        assert!(plan.is_empty());
    }
}
