//! Stable seed derivation.

use sha2::{Digest, Sha256};

/// Child seed for `label` under `master`. Independent of any other label, so
/// adding a new consumer never shifts existing streams.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
