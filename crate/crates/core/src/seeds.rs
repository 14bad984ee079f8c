//! Sub-seed derivation.
//!
//! A single master seed is expanded into independent per-stage seeds:
//! `sub_seed = first 8 bytes (little endian) of SHA-256(master_le || stage || 0x00 || index_le)`.
//! Stage names used by the pipeline are `"mice"`, `"simulate"` and `"draws"`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seeded generator for `(master, stage, index)`.
pub fn stage_rng(master: u64, stage: &str, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, stage, index))
}
