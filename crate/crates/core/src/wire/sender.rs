//! Sender-side flow state: sequence discipline, retention for replay, and
//! checkpoint bookkeeping.
//!
//! Retention policy: every submitted chunk is kept until the END chunk is
//! acked, then the whole flow's retention is dropped at once. Replay after an
//! interrupt resends every retained chunk above the checkpointed seq; the
//! destination deduplicates anything that already landed.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::units::Nanos;

use super::{
    ConnectorHandle, FlowChunk, FlowId, RequestId, WireError, FLAG_DATA, FLAG_END, FLAG_SMALL,
};

/// Durable record of how far a destination has contiguously acked a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub request: RequestId,
    pub flow: FlowId,
    pub acked_seq: u64,
    pub at: Nanos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendReceipt {
    pub seq: u64,
    /// Highest contiguously acked seq after this delivery.
    pub acked_seq: u64,
}

#[derive(Debug)]
pub struct FlowSender {
    pub handle: ConnectorHandle,
    next_seq: u64,
    retained: VecDeque<FlowChunk>,
    acked: Option<u64>,
    end_seq: Option<u64>,
    closed: bool,
    broken: bool,
}

impl FlowSender {
    pub fn new(handle: ConnectorHandle) -> Self {
        FlowSender {
            handle,
            next_seq: 0,
            retained: VecDeque::new(),
            acked: None,
            end_seq: None,
            closed: false,
            broken: false,
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn acked_seq(&self) -> Option<u64> {
        self.acked
    }

    pub fn end_submitted(&self) -> bool {
        self.end_seq.is_some()
    }

    /// True once END is acked and retention has been dropped.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    pub fn retained_len(&self) -> usize {
        self.retained.len()
    }

    /// Validate and retain the next outbound chunk. Chunks must be submitted
    /// in seq order with no gaps, and nothing may follow END.
    pub fn submit(&mut self, chunk: FlowChunk) -> Result<(), WireError> {
        if self.broken {
            return Err(WireError::TransferInterrupted { at_seq: self.next_seq });
        }
        if self.end_seq.is_some() {
            return Err(WireError::FlowClosed);
        }
        if chunk.seq != self.next_seq {
            return Err(WireError::SeqGap {
                expected: self.next_seq,
                got: chunk.seq,
            });
        }
        if chunk.is_end() {
            self.end_seq = Some(chunk.seq);
        }
        self.next_seq += 1;
        self.retained.push_back(chunk);
        Ok(())
    }

    /// Record a contiguous ack from the destination. Dropping retention once
    /// END is acked is what makes the container eventually recyclable.
    pub fn on_delivered(&mut self, seq: u64) -> SendReceipt {
        let acked = match self.acked {
            Some(a) => a.max(seq),
            None => seq,
        };
        self.acked = Some(acked);
        if self.end_seq == Some(acked) {
            self.retained.clear();
            self.closed = true;
        }
        SendReceipt { seq, acked_seq: acked }
    }

    pub fn mark_broken(&mut self) {
        self.broken = true;
    }

    /// Reopen after an interrupt; the caller then replays from a checkpoint.
    pub fn reopen(&mut self) {
        self.broken = false;
    }

    /// Chunks to resend for recovery: everything retained with seq strictly
    /// above the checkpoint (or the whole flow when no checkpoint exists).
    /// Fails if retention is already gone.
    pub fn replay_from(&self, checkpoint: Option<&Checkpoint>) -> Result<Vec<FlowChunk>, WireError> {
        if self.closed {
            return Err(WireError::RetentionLost {
                flow: self.handle.flow,
            });
        }
        let start = checkpoint.map(|c| c.acked_seq + 1).unwrap_or(0);
        Ok(self
            .retained
            .iter()
            .filter(|c| c.seq >= start)
            .cloned()
            .collect())
    }
}

/// Split a payload into DATA chunks of `chunk_size` plus a trailing empty END
/// chunk. Payloads below the small threshold should use [`small_chunk`].
pub fn chunk_payload(
    request: RequestId,
    flow: FlowId,
    payload: &[u8],
    chunk_size: usize,
) -> Vec<FlowChunk> {
    let mut out = Vec::with_capacity(payload.len() / chunk_size + 2);
    for (i, piece) in payload.chunks(chunk_size).enumerate() {
        out.push(FlowChunk {
            request,
            flow,
            seq: i as u64,
            flags: FLAG_DATA,
            payload: piece.to_vec(),
        });
    }
    out.push(FlowChunk {
        request,
        flow,
        seq: out.len() as u64,
        flags: FLAG_END,
        payload: Vec::new(),
    });
    out
}

/// Single-frame transfer for a small payload.
pub fn small_chunk(request: RequestId, flow: FlowId, payload: Vec<u8>) -> FlowChunk {
    FlowChunk {
        request,
        flow,
        seq: 0,
        flags: FLAG_END | FLAG_SMALL,
        payload,
    }
}
