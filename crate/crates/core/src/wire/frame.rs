//! Frame layout, all integers big-endian:
//!
//! ```text
//! offset  size  field
//!      0     2  magic 0xDF17
//!      2     1  version 0x01
//!      3     1  flags (bit0 DATA, bit1 END, bit2 SMALL; rest reserved zero)
//!      4    16  request id
//!     20     8  flow id
//!     28     8  seq
//!     36     4  payload length
//!     40     4  crc32 of payload (poly 0xEDB88320)
//!     44     -  payload
//! ```

use super::{FlowChunk, RequestId, WireError, CHUNK_SIZE, FLAG_ALL, FLAG_END, FLAG_SMALL};

pub const MAGIC: u16 = 0xDF17;
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 44;

const CRC_TABLE: [u32; 256] = build_crc_table();

const fn build_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

pub fn encode_frame(chunk: &FlowChunk) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + chunk.payload.len());
    out.extend_from_slice(&MAGIC.to_be_bytes());
    out.push(VERSION);
    out.push(chunk.flags);
    out.extend_from_slice(&chunk.request.0);
    out.extend_from_slice(&chunk.flow.to_be_bytes());
    out.extend_from_slice(&chunk.seq.to_be_bytes());
    out.extend_from_slice(&(chunk.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32(&chunk.payload).to_be_bytes());
    out.extend_from_slice(&chunk.payload);
    out
}

/// Decode exactly one frame. Total: every input either yields a chunk or a
/// typed error, never a panic.
pub fn decode_frame(bytes: &[u8]) -> Result<FlowChunk, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::TruncatedFrame {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic = u16::from_be_bytes([bytes[0], bytes[1]]);
    if magic != MAGIC {
        return Err(WireError::BadMagic { found: magic });
    }
    if bytes[2] != VERSION {
        return Err(WireError::BadVersion { found: bytes[2] });
    }
    let flags = bytes[3];
    if flags & !FLAG_ALL != 0 {
        return Err(WireError::BadFlags { found: flags });
    }
    let mut request = [0u8; 16];
    request.copy_from_slice(&bytes[4..20]);
    let flow = u64::from_be_bytes(bytes[20..28].try_into().unwrap());
    let seq = u64::from_be_bytes(bytes[28..36].try_into().unwrap());
    let payload_len = u32::from_be_bytes(bytes[36..40].try_into().unwrap());
    if payload_len as usize > CHUNK_SIZE {
        return Err(WireError::BadLength {
            declared: payload_len,
            actual: bytes.len(),
        });
    }
    let total = HEADER_LEN + payload_len as usize;
    if bytes.len() < total {
        return Err(WireError::TruncatedFrame {
            needed: total,
            got: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(WireError::BadLength {
            declared: payload_len,
            actual: bytes.len(),
        });
    }
    if flags & FLAG_SMALL != 0 && (seq != 0 || flags & FLAG_END == 0) {
        return Err(WireError::BadFlags { found: flags });
    }
    let expected = u32::from_be_bytes(bytes[40..44].try_into().unwrap());
    let payload = bytes[44..total].to_vec();
    let found = crc32(&payload);
    if expected != found {
        return Err(WireError::BadCrc { expected, found });
    }
    Ok(FlowChunk {
        request: RequestId(request),
        flow,
        seq,
        flags,
        payload,
    })
}
