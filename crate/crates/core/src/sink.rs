//! Host-side data sink: one per node. Arriving chunks are matched to the
//! (request, destination function, data name) they feed, assembled in seq
//! order, and handed to the local engine as complete input bundles.
//!
//! The sink owns three responsibilities that keep the rest of the runtime
//! simple: duplicate suppression (replays land here twice, FLUs never see
//! them), readiness detection (a countdown of incomplete declared inputs per
//! (request, function)), and memory lifecycle (proactive release once data is
//! consumed, TTL spill to disk for whatever lingers).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::units::Nanos;
use crate::wire::{crc32, stable_hash, Checkpoint, FlowChunk, FlowId, RequestId};

pub type FluId = u64;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct WaitMatchKey {
    pub request: RequestId,
    pub function: String,
    pub data: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryLocation {
    Memory,
    Spilled,
}

#[derive(Debug)]
pub struct WaitMatchEntry {
    pub key: WaitMatchKey,
    assembled: Vec<u8>,
    next_seq: u64,
    complete: bool,
    /// Logical size; stays valid while the bytes live on disk.
    bytes: u64,
    location: EntryLocation,
    taken_by: Option<FluId>,
    pub created: Nanos,
    pub last_touch: Nanos,
}

impl WaitMatchEntry {
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn size(&self) -> u64 {
        self.bytes
    }

    pub fn location(&self) -> EntryLocation {
        self.location
    }

    pub fn taken_by(&self) -> Option<FluId> {
        self.taken_by
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct SinkStats {
    pub puts: u64,
    pub small_puts: u64,
    pub dup_chunks_dropped: u64,
    pub entries_completed: u64,
    pub takes: u64,
    pub takes_refused_not_ready: u64,
    pub takes_refused_already_taken: u64,
    /// Bundles handed to a second FLU for the same (request, function).
    /// Exactly-once dispatch means this must stay zero.
    pub double_deliveries: u64,
    pub released: u64,
    pub released_bytes: u64,
    pub spills: u64,
    pub spill_failures: u64,
    pub reloads: u64,
    pub resident_bytes: u64,
    /// Integral of resident_bytes over time, exact for the step trace.
    #[serde(skip)]
    byte_nanos: u128,
    #[serde(skip)]
    last_change: Nanos,
}

impl SinkStats {
    fn settle(&mut self, now: Nanos) {
        debug_assert!(now >= self.last_change);
        self.byte_nanos += self.resident_bytes as u128 * (now - self.last_change) as u128;
        self.last_change = now;
    }

    fn add_resident(&mut self, bytes: u64, now: Nanos) {
        self.settle(now);
        self.resident_bytes += bytes;
    }

    fn drop_resident(&mut self, bytes: u64, now: Nanos) {
        self.settle(now);
        self.resident_bytes -= bytes;
    }

    /// Byte-seconds of memory held, integrated up to `now`.
    pub fn byte_seconds(&self, now: Nanos) -> f64 {
        let total = self.byte_nanos
            + self.resident_bytes as u128 * (now.saturating_sub(self.last_change)) as u128;
        total as f64 / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SinkError {
    #[error("inputs for {function} not complete yet")]
    NotReady { function: String },
    #[error("inputs for {function} already taken by flu {by}")]
    AlreadyTaken { function: String, by: FluId },
    #[error("entry for {function}/{data} still needed (never taken)")]
    StillNeeded { function: String, data: String },
    #[error("no entry for {function}/{data}")]
    NoSuchEntry { function: String, data: String },
    #[error("chunk seq {got} for {function}/{data}, expected {expected}")]
    Sequence {
        function: String,
        data: String,
        expected: u64,
        got: u64,
    },
    #[error("chunk after END for {function}/{data}")]
    AfterEnd { function: String, data: String },
    #[error("spill store: {message}")]
    Spill { message: String },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct SpillMeta {
    len: u64,
    crc32: u32,
}

/// Spilled bytes live under `<root>/<function>/<key-hash>.bin` with a sibling
/// `.meta` carrying length and checksum. Without a root directory the store
/// keeps the same layout in memory (runs that never inspect the disk).
#[derive(Debug)]
enum SpillBackend {
    Disk(PathBuf),
    Mem(BTreeMap<(String, String), (Vec<u8>, SpillMeta)>),
}

#[derive(Debug)]
pub struct SpillStore {
    backend: SpillBackend,
}

impl SpillStore {
    pub fn in_memory() -> Self {
        SpillStore {
            backend: SpillBackend::Mem(BTreeMap::new()),
        }
    }

    pub fn on_disk(root: PathBuf) -> Self {
        SpillStore {
            backend: SpillBackend::Disk(root),
        }
    }

    fn write(&mut self, function: &str, hash: &str, bytes: &[u8]) -> Result<(), SinkError> {
        let meta = SpillMeta {
            len: bytes.len() as u64,
            crc32: crc32(bytes),
        };
        match &mut self.backend {
            SpillBackend::Mem(map) => {
                map.insert((function.to_string(), hash.to_string()), (bytes.to_vec(), meta));
                Ok(())
            }
            SpillBackend::Disk(root) => {
                let dir = root.join(function);
                let io = |e: std::io::Error| SinkError::Spill {
                    message: format!("{}: {e}", dir.display()),
                };
                std::fs::create_dir_all(&dir).map_err(io)?;
                std::fs::write(dir.join(format!("{hash}.bin")), bytes).map_err(io)?;
                let meta_json = serde_json::to_vec(&meta).expect("meta serializes");
                std::fs::write(dir.join(format!("{hash}.meta")), meta_json).map_err(io)
            }
        }
    }

    fn read(&self, function: &str, hash: &str) -> Result<Vec<u8>, SinkError> {
        let (bytes, meta) = match &self.backend {
            SpillBackend::Mem(map) => map
                .get(&(function.to_string(), hash.to_string()))
                .cloned()
                .ok_or_else(|| SinkError::Spill {
                    message: format!("missing spill {function}/{hash}"),
                })?,
            SpillBackend::Disk(root) => {
                let dir = root.join(function);
                let io = |e: std::io::Error| SinkError::Spill {
                    message: format!("{}: {e}", dir.display()),
                };
                let bytes = std::fs::read(dir.join(format!("{hash}.bin"))).map_err(io)?;
                let meta: SpillMeta =
                    serde_json::from_slice(&std::fs::read(dir.join(format!("{hash}.meta"))).map_err(io)?)
                        .map_err(|e| SinkError::Spill {
                            message: format!("bad meta for {function}/{hash}: {e}"),
                        })?;
                (bytes, meta)
            }
        };
        if bytes.len() as u64 != meta.len || crc32(&bytes) != meta.crc32 {
            return Err(SinkError::Spill {
                message: format!("corrupt spill {function}/{hash}"),
            });
        }
        Ok(bytes)
    }

    fn append_checkpoint(&mut self, cp: &Checkpoint) {
        if let SpillBackend::Disk(root) = &self.backend {
            // Best-effort durability mirror; the authoritative copy is the
            // in-memory table, failures only lose the audit trail.
            if std::fs::create_dir_all(root).is_ok() {
                if let Ok(mut f) = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(root.join("checkpoints.log"))
                {
                    let _ = writeln!(f, "{}", serde_json::to_string(cp).expect("cp serializes"));
                }
            }
        }
    }
}

#[derive(Debug)]
struct FlowAckState {
    acked_seq: u64,
    acks_since_cp: u64,
    window_start: Nanos,
    checkpoint: Option<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PutOutcome {
    /// False when the chunk was a duplicate and was dropped.
    pub accepted: bool,
    pub entry_complete: bool,
    /// Set when this put completed the last missing input of a function.
    pub function_ready: Option<(RequestId, String)>,
}

pub struct DataSink {
    node: String,
    entries: BTreeMap<WaitMatchKey, WaitMatchEntry>,
    /// Declared input bundle (in order) per local function.
    declared: BTreeMap<String, Vec<String>>,
    /// Incomplete-input countdown per (request, function).
    countdown: BTreeMap<(RequestId, String), usize>,
    taken: BTreeMap<(RequestId, String), FluId>,
    acks: BTreeMap<(RequestId, FlowId), FlowAckState>,
    spill: SpillStore,
    ttl: Nanos,
    checkpoint_chunks: u64,
    checkpoint_interval: Nanos,
    pub stats: SinkStats,
}

impl DataSink {
    pub fn new(
        node: impl Into<String>,
        declared: BTreeMap<String, Vec<String>>,
        ttl: Nanos,
        checkpoint_chunks: u64,
        checkpoint_interval: Nanos,
        spill: SpillStore,
    ) -> Self {
        DataSink {
            node: node.into(),
            entries: BTreeMap::new(),
            declared,
            countdown: BTreeMap::new(),
            taken: BTreeMap::new(),
            acks: BTreeMap::new(),
            spill,
            ttl,
            checkpoint_chunks,
            checkpoint_interval,
            stats: SinkStats::default(),
        }
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn entry(&self, key: &WaitMatchKey) -> Option<&WaitMatchEntry> {
        self.entries.get(key)
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// Deliver one chunk. Duplicates (seq below the high-water mark) are
    /// dropped and counted; gaps are a protocol violation.
    pub fn put(
        &mut self,
        now: Nanos,
        function: &str,
        data: &str,
        chunk: &FlowChunk,
    ) -> Result<PutOutcome, SinkError> {
        self.stats.puts += 1;
        if chunk.is_small() {
            self.stats.small_puts += 1;
        }
        let key = WaitMatchKey {
            request: chunk.request,
            function: function.to_string(),
            data: data.to_string(),
        };
        let entry = self.entries.entry(key.clone()).or_insert_with(|| {
            WaitMatchEntry {
                key: key.clone(),
                assembled: Vec::new(),
                next_seq: 0,
                complete: false,
                bytes: 0,
                location: EntryLocation::Memory,
                taken_by: None,
                created: now,
                last_touch: now,
            }
        });
        if chunk.seq < entry.next_seq {
            self.stats.dup_chunks_dropped += 1;
            return Ok(PutOutcome {
                accepted: false,
                entry_complete: entry.complete,
                function_ready: None,
            });
        }
        if chunk.seq > entry.next_seq {
            return Err(SinkError::Sequence {
                function: function.to_string(),
                data: data.to_string(),
                expected: entry.next_seq,
                got: chunk.seq,
            });
        }
        if entry.complete {
            return Err(SinkError::AfterEnd {
                function: function.to_string(),
                data: data.to_string(),
            });
        }
        // A spilled entry that starts receiving again comes back to memory.
        if entry.location == EntryLocation::Spilled {
            let hash = key_hash(&key);
            let bytes = self.spill.read(function, &hash)?;
            self.stats.reloads += 1;
            self.stats.add_resident(bytes.len() as u64, now);
            entry.assembled = bytes;
            entry.location = EntryLocation::Memory;
        }
        entry.next_seq += 1;
        entry.last_touch = now;
        if !chunk.payload.is_empty() {
            entry.assembled.extend_from_slice(&chunk.payload);
            entry.bytes += chunk.payload.len() as u64;
            self.stats.add_resident(chunk.payload.len() as u64, now);
        }
        let mut outcome = PutOutcome {
            accepted: true,
            entry_complete: false,
            function_ready: None,
        };
        if chunk.is_end() {
            entry.complete = true;
            outcome.entry_complete = true;
            self.stats.entries_completed += 1;
            // Countdown only tracks declared inputs; stray data never
            // triggers anything.
            if self
                .declared
                .get(function)
                .map(|d| d.contains(&key.data))
                .unwrap_or(false)
            {
                let total = self.declared[function].len();
                let slot = self
                    .countdown
                    .entry((chunk.request, function.to_string()))
                    .or_insert(total);
                *slot -= 1;
                if *slot == 0 {
                    outcome.function_ready = Some((chunk.request, function.to_string()));
                }
            }
        }
        self.record_ack(chunk.request, chunk.flow, chunk.seq, now);
        Ok(outcome)
    }

    /// Hand the complete input bundle to a FLU, in declared order. Refuses
    /// partial bundles and second takes.
    pub fn take(
        &mut self,
        now: Nanos,
        request: RequestId,
        function: &str,
        flu: FluId,
    ) -> Result<Vec<(String, Vec<u8>)>, SinkError> {
        if let Some(&by) = self.taken.get(&(request, function.to_string())) {
            self.stats.takes_refused_already_taken += 1;
            return Err(SinkError::AlreadyTaken {
                function: function.to_string(),
                by,
            });
        }
        let declared = self.declared.get(function).cloned().unwrap_or_default();
        let ready = self
            .countdown
            .get(&(request, function.to_string()))
            .map(|&c| c == 0 && !declared.is_empty())
            .unwrap_or(false);
        if !ready {
            self.stats.takes_refused_not_ready += 1;
            return Err(SinkError::NotReady {
                function: function.to_string(),
            });
        }
        let mut bundle = Vec::with_capacity(declared.len());
        for data in &declared {
            let key = WaitMatchKey {
                request,
                function: function.to_string(),
                data: data.clone(),
            };
            let hash = key_hash(&key);
            let entry = self.entries.get_mut(&key).ok_or_else(|| SinkError::NoSuchEntry {
                function: function.to_string(),
                data: data.clone(),
            })?;
            debug_assert!(entry.complete);
            let bytes = match entry.location {
                EntryLocation::Memory => entry.assembled.clone(),
                EntryLocation::Spilled => {
                    self.stats.reloads += 1;
                    self.spill.read(function, &hash)?
                }
            };
            entry.taken_by = Some(flu);
            entry.last_touch = now;
            bundle.push((data.clone(), bytes));
        }
        if self.taken.insert((request, function.to_string()), flu).is_some() {
            self.stats.double_deliveries += 1;
        }
        self.stats.takes += 1;
        Ok(bundle)
    }

    /// Drop one entry whose consumers are all served. Freeing unconsumed data
    /// is refused; the TTL path handles abandoned entries instead.
    pub fn proactive_release(
        &mut self,
        now: Nanos,
        request: RequestId,
        function: &str,
        data: &str,
    ) -> Result<u64, SinkError> {
        let key = WaitMatchKey {
            request,
            function: function.to_string(),
            data: data.to_string(),
        };
        let entry = self.entries.get(&key).ok_or_else(|| SinkError::NoSuchEntry {
            function: function.to_string(),
            data: data.to_string(),
        })?;
        if entry.taken_by.is_none() {
            return Err(SinkError::StillNeeded {
                function: function.to_string(),
                data: data.to_string(),
            });
        }
        Ok(self.remove_entry(&key, now))
    }

    /// Drop everything a finished request left behind (release-at-completion
    /// policy, and GC of stray data under the proactive policy).
    pub fn release_request(&mut self, now: Nanos, request: RequestId) -> u64 {
        let keys: Vec<WaitMatchKey> = self
            .entries
            .keys()
            .filter(|k| k.request == request)
            .cloned()
            .collect();
        let mut freed = 0;
        for key in keys {
            freed += self.remove_entry(&key, now);
        }
        self.countdown.retain(|(r, _), _| *r != request);
        self.taken.retain(|(r, _), _| *r != request);
        self.acks.retain(|(r, _), _| *r != request);
        freed
    }

    fn remove_entry(&mut self, key: &WaitMatchKey, now: Nanos) -> u64 {
        if let Some(entry) = self.entries.remove(key) {
            if entry.location == EntryLocation::Memory {
                self.stats.drop_resident(entry.assembled.len() as u64, now);
            }
            self.stats.released += 1;
            self.stats.released_bytes += entry.bytes;
            entry.bytes
        } else {
            0
        }
    }

    /// Push entries idle past the TTL out to the spill store. Failed writes
    /// leave the entry resident; the next sweep retries.
    pub fn expire_sweep(&mut self, now: Nanos) -> Vec<WaitMatchKey> {
        let aged: Vec<WaitMatchKey> = self
            .entries
            .values()
            .filter(|e| {
                e.location == EntryLocation::Memory
                    && now.saturating_sub(e.last_touch) >= self.ttl
                    && !e.assembled.is_empty()
            })
            .map(|e| e.key.clone())
            .collect();
        let mut spilled = Vec::new();
        for key in aged {
            let hash = key_hash(&key);
            let entry = self.entries.get_mut(&key).expect("aged key exists");
            match self.spill.write(&key.function, &hash, &entry.assembled) {
                Ok(()) => {
                    self.stats.spills += 1;
                    self.stats.drop_resident(entry.assembled.len() as u64, now);
                    entry.assembled = Vec::new();
                    entry.location = EntryLocation::Spilled;
                    spilled.push(key);
                }
                Err(_) => {
                    self.stats.spill_failures += 1;
                }
            }
        }
        spilled
    }

    /// ReDo support: allow a re-dispatch of (request, function) to take its
    /// inputs again.
    pub fn reset_taken(&mut self, request: RequestId, function: &str) {
        self.taken.remove(&(request, function.to_string()));
        for (key, entry) in self.entries.iter_mut() {
            if key.request == request && key.function == function {
                entry.taken_by = None;
            }
        }
    }

    fn record_ack(&mut self, request: RequestId, flow: FlowId, seq: u64, now: Nanos) {
        let state = self.acks.entry((request, flow)).or_insert(FlowAckState {
            acked_seq: seq,
            acks_since_cp: 0,
            window_start: now,
            checkpoint: None,
        });
        state.acked_seq = state.acked_seq.max(seq);
        state.acks_since_cp += 1;
        if state.acks_since_cp >= self.checkpoint_chunks
            || now.saturating_sub(state.window_start) >= self.checkpoint_interval
        {
            let cp = Checkpoint {
                request,
                flow,
                acked_seq: state.acked_seq,
                at: now,
            };
            state.checkpoint = Some(cp);
            state.acks_since_cp = 0;
            state.window_start = now;
            self.spill.append_checkpoint(&cp);
        }
    }

    /// Latest durable checkpoint for a flow, if any.
    pub fn checkpoint_for(&self, request: RequestId, flow: FlowId) -> Option<Checkpoint> {
        self.acks.get(&(request, flow)).and_then(|s| s.checkpoint)
    }

    /// Force a checkpoint at the current acked seq (used before planned
    /// hand-offs; the cadence path covers normal operation).
    pub fn checkpoint_flow(&mut self, request: RequestId, flow: FlowId, now: Nanos) -> Option<Checkpoint> {
        let state = self.acks.get_mut(&(request, flow))?;
        let cp = Checkpoint {
            request,
            flow,
            acked_seq: state.acked_seq,
            at: now,
        };
        state.checkpoint = Some(cp);
        state.acks_since_cp = 0;
        state.window_start = now;
        self.spill.append_checkpoint(&cp);
        Some(cp)
    }

    /// True when every key of this request has been released.
    pub fn request_clear(&self, request: RequestId) -> bool {
        !self.entries.keys().any(|k| k.request == request)
    }
}

pub fn key_hash(key: &WaitMatchKey) -> String {
    format!(
        "{:016x}",
        stable_hash(&[&key.request.0, key.function.as_bytes(), key.data.as_bytes()])
    )
}
