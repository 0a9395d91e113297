//! Chunked transfer plane: frame codec, token-bucket pacing, per-flow send
//! state with retention, and checkpoint/replay.
//!
//! A flow is one logical transfer of one named payload from a source function
//! to one destination. Chunks are numbered from 0; exactly one chunk carries
//! the END flag and nothing follows it. Payloads at most `SMALL_THRESHOLD - 1`
//! bytes travel as a single END|SMALL frame instead of a chunk stream.

mod bucket;
mod frame;
mod sender;

pub use bucket::TokenBucket;
pub use frame::{crc32, decode_frame, encode_frame, HEADER_LEN, MAGIC, VERSION};
pub use sender::{chunk_payload, small_chunk, Checkpoint, FlowSender, SendReceipt};

use std::fmt;

use serde::{Deserialize, Serialize};

/// Default streaming chunk size in bytes.
pub const CHUNK_SIZE: usize = 65_536;
/// Payloads strictly below this travel on the small-data path.
pub const SMALL_THRESHOLD: usize = 16_384;

/// 16-byte invocation id, globally unique within a run.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub [u8; 16]);

impl RequestId {
    pub fn from_seed(seed: u64, index: u64) -> Self {
        // splitmix64 over (seed, index); stable across runs of the same seed.
        let mut bytes = [0u8; 16];
        let mut x = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for word in 0..2 {
            x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            bytes[word * 8..word * 8 + 8].copy_from_slice(&z.to_be_bytes());
        }
        RequestId(bytes)
    }

    pub fn short(&self) -> String {
        self.0[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RequestId({self})")
    }
}

pub type FlowId = u64;

/// Stable 64-bit flow identity from (source function, data name, destination
/// function). FNV-1a; must not change between runs, checkpoints key on it.
pub fn flow_id(source: &str, data_name: &str, destination: &str) -> FlowId {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in [source, data_name, destination] {
        for &b in part.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= 0;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Stable content hash used for spill file names.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub const FLAG_DATA: u8 = 0b001;
pub const FLAG_END: u8 = 0b010;
pub const FLAG_SMALL: u8 = 0b100;
pub const FLAG_ALL: u8 = FLAG_DATA | FLAG_END | FLAG_SMALL;

/// One transfer unit. Invariants: SMALL implies seq 0 and END; no chunk of a
/// flow has a seq greater than its END chunk's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowChunk {
    pub request: RequestId,
    pub flow: FlowId,
    pub seq: u64,
    pub flags: u8,
    pub payload: Vec<u8>,
}

impl FlowChunk {
    pub fn is_end(&self) -> bool {
        self.flags & FLAG_END != 0
    }

    pub fn is_small(&self) -> bool {
        self.flags & FLAG_SMALL != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConnectorKind {
    /// Same-node chunk stream; skips framing but is still paced by the
    /// sender's egress bucket.
    Local,
    /// Cross-node chunk stream; framed and bucket-paced.
    Remote,
    /// Single-frame transfer for payloads below the small threshold.
    Small,
}

impl fmt::Display for ConnectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnectorKind::Local => "local",
            ConnectorKind::Remote => "remote",
            ConnectorKind::Small => "small",
        })
    }
}

/// Kind selection: size wins over locality, small transfers never allocate a
/// streaming connector.
pub fn connector_kind(src_node: &str, dst_node: &str, size_hint: u64) -> ConnectorKind {
    if size_hint < SMALL_THRESHOLD as u64 {
        ConnectorKind::Small
    } else if src_node == dst_node {
        ConnectorKind::Local
    } else {
        ConnectorKind::Remote
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectorHandle {
    pub request: RequestId,
    pub flow: FlowId,
    pub kind: ConnectorKind,
    pub src_node: String,
    pub dst_node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("bad magic 0x{found:04X}")]
    BadMagic { found: u16 },
    #[error("unsupported version {found}")]
    BadVersion { found: u8 },
    #[error("reserved flag bits set: 0b{found:08b}")]
    BadFlags { found: u8 },
    #[error("declared payload length {declared} does not fit frame of {actual} bytes")]
    BadLength { declared: u32, actual: usize },
    #[error("payload crc mismatch: header 0x{expected:08X}, computed 0x{found:08X}")]
    BadCrc { expected: u32, found: u32 },
    #[error("truncated frame: need {needed} bytes, have {got}")]
    TruncatedFrame { needed: usize, got: usize },
    #[error("sequence gap: expected {expected}, got {got}")]
    SeqGap { expected: u64, got: u64 },
    #[error("transfer interrupted at seq {at_seq}")]
    TransferInterrupted { at_seq: u64 },
    #[error("sender retention lost for flow {flow:#018x}")]
    RetentionLost { flow: FlowId },
    #[error("destination node {node} unreachable")]
    NetworkUnreachable { node: String },
    #[error("acquire of {bits} bits exceeds bucket burst {burst}")]
    RequestTooLarge { bits: u64, burst: u64 },
    #[error("flow already closed by END")]
    FlowClosed,
}
