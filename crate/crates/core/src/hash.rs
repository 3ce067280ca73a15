//! Stable content hashes for parameter groups.
//!
//! Used by tests to prove that an optimization step touched exactly the
//! parameter groups it was supposed to touch, and by determinism checks to
//! compare runs without serializing full weight dumps.

use sha2::{Digest, Sha256};

use crate::autodiff::Param;

/// SHA-256 over the sorted (name, shape, value-bytes) of a parameter group.
///
/// Parameters are ordered by name so the hash is independent of collection
/// order. Values are hashed as little-endian f64 bit patterns, so the hash
/// distinguishes -0.0 from 0.0 and is sensitive to every bit of the state.
pub fn hash_params(params: &[Param]) -> String {
    let mut entries: Vec<(String, Vec<usize>, Vec<f64>)> = params
        .iter()
        .map(|p| (p.name(), p.shape(), p.value_clone().into_data()))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let mut hasher = Sha256::new();
    for (name, shape, data) in &entries {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update((shape.len() as u64).to_le_bytes());
        for &d in shape {
            hasher.update((d as u64).to_le_bytes());
        }
        for &v in data {
            hasher.update(v.to_le_bytes());
        }
    }
    hex(&hasher.finalize())
}

/// SHA-256 of a byte slice, as lowercase hex.
pub fn hash_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{:02x}", b));
    }
    s
}
