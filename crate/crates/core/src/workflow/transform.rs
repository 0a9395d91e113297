//! Synthetic function bodies. Each transform is a pure function of the salted
//! input bytes, so end-to-end results can be byte-compared against a direct
//! composition without running the distributed machinery.

use crate::wire::{crc32, stable_hash};

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// Concatenate the inputs in declared order.
    Concat,
    /// 12-byte summary: total input length (8 bytes BE) plus a salted crc32.
    ByteCount,
    /// XOR-fold the input into ceil(len / k) bytes; models a shard extractor.
    Fold { k: u32 },
    /// Expand a salted seed into `out` pseudo-random bytes.
    Mix { out: u64 },
}

impl Transform {
    /// `salt` is the executing function's name; identical inputs fed to
    /// differently named functions produce different digests.
    pub fn apply(&self, salt: &str, inputs: &[&[u8]]) -> Vec<u8> {
        match self {
            Transform::Concat => {
                let mut out = Vec::with_capacity(inputs.iter().map(|i| i.len()).sum());
                for i in inputs {
                    out.extend_from_slice(i);
                }
                out
            }
            Transform::ByteCount => {
                let len: u64 = inputs.iter().map(|i| i.len() as u64).sum();
                let mut acc = crc32(salt.as_bytes());
                for i in inputs {
                    acc = crc32(&[&acc.to_be_bytes()[..], i].concat());
                }
                let mut out = Vec::with_capacity(12);
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(&acc.to_be_bytes());
                out
            }
            Transform::Fold { k } => {
                let joined = Transform::Concat.apply(salt, inputs);
                let k = (*k).max(1) as usize;
                if joined.is_empty() {
                    return Vec::new();
                }
                let piece = joined.len().div_ceil(k);
                let mut out = vec![0u8; piece];
                for (i, b) in joined.iter().enumerate() {
                    out[i % piece] ^= b;
                }
                out
            }
            Transform::Mix { out } => {
                let mut parts: Vec<&[u8]> = vec![salt.as_bytes()];
                parts.extend_from_slice(inputs);
                let mut state = stable_hash(&parts) | 1;
                let mut bytes = Vec::with_capacity(*out as usize);
                while (bytes.len() as u64) < *out {
                    // xorshift64* keystream
                    state ^= state >> 12;
                    state ^= state << 25;
                    state ^= state >> 27;
                    let word = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
                    let take = (*out as usize - bytes.len()).min(8);
                    bytes.extend_from_slice(&word.to_be_bytes()[..take]);
                }
                bytes
            }
        }
    }
}

/// Switch routing rule: the first payload byte picks the arm. Decided from
/// the payload before the first chunk leaves the container.
pub fn switch_index(payload: &[u8], arms: usize) -> usize {
    debug_assert!(arms > 0);
    payload.first().map(|&b| b as usize % arms).unwrap_or(0)
}
