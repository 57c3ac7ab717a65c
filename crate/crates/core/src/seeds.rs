//! Per-component seed derivation: the first eight bytes (little-endian) of
//! SHA-256 over the global seed's little-endian bytes followed by the UTF-8
//! component name.

use sha2::{Digest, Sha256};

pub fn component_seed(global: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
