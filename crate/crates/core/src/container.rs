//! Container model: one warm instance of one function on one node. The
//! compute side (FLU) runs a single invocation at a time; the data side (DLU)
//! keeps streaming finished outputs after the FLU moves on. Both sides are
//! tracked here so the recycler can prove a container is drained before
//! taking it.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::num::Ewma;
use crate::units::Nanos;
use crate::wire::{ConnectorKind, FlowChunk, FlowId, FlowSender, RequestId, TokenBucket, CHUNK_SIZE};
use crate::workflow::{bandwidth_bps, cpu_cores};

pub type ContainerId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerState {
    Idle,
    Busy { request: RequestId },
    /// Callstack hold after an invocation whose data outlives its compute.
    Blocked,
}

/// One pending output transfer. The pump slices `payload` into wire chunks;
/// the embedded sender keeps retention for replay after a transfer fault.
/// After a fault, `resend` holds the replayed chunks; the pump drains it
/// (paying for bandwidth again) before submitting fresh ones.
#[derive(Debug)]
pub struct OutboundEmission {
    pub request: RequestId,
    pub flow: FlowId,
    pub data: String,
    pub source: String,
    pub dest_function: String,
    pub dest_node: String,
    pub connector: ConnectorKind,
    pub payload: Vec<u8>,
    pub sender: FlowSender,
    pub resend: VecDeque<FlowChunk>,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct ContainerStats {
    pub invocations: u64,
    pub flu_nanos: u64,
    pub blocks: u64,
    pub block_nanos: u64,
    pub emissions: u64,
}

#[derive(Debug)]
pub struct Container {
    pub id: ContainerId,
    pub node: String,
    pub function: String,
    pub memory_mb: u64,
    state: ContainerState,
    /// Bumped on recycle and on FLU fault; events carrying an older
    /// generation are stale and must be ignored.
    pub generation: u64,
    blocked_until: Nanos,
    outbound: VecDeque<OutboundEmission>,
    /// Flows submitted but not yet END-acked by the destination sink.
    open_flows: BTreeSet<(RequestId, FlowId)>,
    /// Egress pacing for the DLU; starts empty so a cold container pays full
    /// price from the first chunk.
    pub bucket: TokenBucket,
    flu_ewma: Ewma<f64>,
    pub created: Nanos,
    pub last_active: Nanos,
    pub stats: ContainerStats,
}

impl Container {
    pub fn new(id: ContainerId, node: impl Into<String>, function: impl Into<String>, memory_mb: u64, now: Nanos) -> Self {
        Container {
            id,
            node: node.into(),
            function: function.into(),
            memory_mb,
            state: ContainerState::Idle,
            generation: 0,
            blocked_until: 0,
            outbound: VecDeque::new(),
            open_flows: BTreeSet::new(),
            bucket: TokenBucket::new(bandwidth_bps(memory_mb), (CHUNK_SIZE * 8) as u64, 0),
            flu_ewma: Ewma::new(0.3),
            created: now,
            last_active: now,
            stats: ContainerStats::default(),
        }
    }

    pub fn state(&self) -> ContainerState {
        self.state
    }

    pub fn cpu_cores(&self) -> f64 {
        cpu_cores(self.memory_mb)
    }

    pub fn bandwidth_bps(&self) -> u64 {
        bandwidth_bps(self.memory_mb)
    }

    pub fn is_idle(&self) -> bool {
        self.state == ContainerState::Idle
    }

    pub fn begin_flu(&mut self, now: Nanos, request: RequestId) {
        debug_assert_eq!(self.state, ContainerState::Idle, "dispatch to a non-idle container");
        self.state = ContainerState::Busy { request };
        self.stats.invocations += 1;
        self.last_active = now;
    }

    /// Smoothed FLU seconds. Read this *before* `finish_flu` when pricing the
    /// invocation that just ended: a cold container reports 0, which makes
    /// the first block maximally conservative.
    pub fn t_flu_secs(&self) -> f64 {
        self.flu_ewma.value_or_zero()
    }

    pub fn finish_flu(&mut self, now: Nanos, elapsed: Nanos) {
        debug_assert!(matches!(self.state, ContainerState::Busy { .. }));
        self.flu_ewma.observe(elapsed as f64 / 1e9);
        self.stats.flu_nanos += elapsed;
        self.state = if now < self.blocked_until {
            ContainerState::Blocked
        } else {
            ContainerState::Idle
        };
        self.last_active = now;
    }

    /// Register a backpressure signal raised at `now`: the slot accepts no
    /// new FLU before `until`. A busy slot keeps running its current
    /// invocation; `finish_flu` lands it in Blocked if the window is still
    /// open by then.
    pub fn post_block(&mut self, now: Nanos, until: Nanos) {
        self.blocked_until = self.blocked_until.max(until);
        self.stats.blocks += 1;
        self.stats.block_nanos += until.saturating_sub(now);
        if self.state == ContainerState::Idle && now < self.blocked_until {
            self.state = ContainerState::Blocked;
        }
        self.last_active = now;
    }

    /// Hold the callstack for `nanos`: no new FLU until the data side has had
    /// this long to drain.
    pub fn block_for(&mut self, now: Nanos, nanos: Nanos) {
        self.post_block(now, now + nanos);
    }

    pub fn blocked_until(&self) -> Nanos {
        self.blocked_until
    }

    pub fn poll_unblock(&mut self, now: Nanos) -> bool {
        if self.state == ContainerState::Blocked && now >= self.blocked_until {
            self.state = ContainerState::Idle;
            self.last_active = now;
            true
        } else {
            false
        }
    }

    pub fn enqueue_emission(&mut self, em: OutboundEmission) {
        self.open_flows.insert((em.request, em.flow));
        self.stats.emissions += 1;
        self.outbound.push_back(em);
    }

    pub fn front_emission(&mut self) -> Option<&mut OutboundEmission> {
        self.outbound.front_mut()
    }

    pub fn outbound_front(&self) -> Option<&OutboundEmission> {
        self.outbound.front()
    }

    pub fn pop_emission(&mut self) -> Option<OutboundEmission> {
        self.outbound.pop_front()
    }

    pub fn requeue_emission(&mut self, em: OutboundEmission) {
        self.outbound.push_front(em);
    }

    pub fn dlu_queue_len(&self) -> usize {
        self.outbound.len()
    }

    /// Bytes the data side still has to move: unsubmitted payload across all
    /// queued emissions plus anything waiting for resend. Chunks already
    /// submitted (at most one in flight) are excluded.
    pub fn outbound_bytes(&self) -> u64 {
        self.outbound
            .iter()
            .map(|em| {
                let submitted = (em.sender.next_seq() as usize * CHUNK_SIZE).min(em.payload.len());
                let resend: usize = em.resend.iter().map(|c| c.payload.len()).sum();
                (em.payload.len() - submitted + resend) as u64
            })
            .sum()
    }

    pub fn dlu_empty(&self) -> bool {
        self.outbound.is_empty()
    }

    pub fn flow_acked(&mut self, now: Nanos, request: RequestId, flow: FlowId) {
        self.open_flows.remove(&(request, flow));
        self.last_active = now;
    }

    pub fn open_flow_count(&self) -> usize {
        self.open_flows.len()
    }

    /// Data-consistent keep-alive: a container may be reclaimed only when its
    /// compute slot is free, nothing is queued or in flight on the data side,
    /// and it has sat idle past the keep-alive deadline.
    pub fn is_recyclable(&self, now: Nanos, keepalive: Nanos) -> bool {
        self.state == ContainerState::Idle
            && self.outbound.is_empty()
            && self.open_flows.is_empty()
            && now.saturating_sub(self.last_active) >= keepalive
    }

    /// Drop all per-invocation state after a fault; scheduled events holding
    /// the old generation become no-ops.
    pub fn abort_flu(&mut self, now: Nanos) {
        self.generation += 1;
        self.state = ContainerState::Idle;
        self.last_active = now;
    }
}
