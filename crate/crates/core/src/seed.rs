//! Stage-keyed seed splitting.
//!
//! A sub-seed is the first eight bytes (little-endian) of
//! `SHA-256(global_seed.to_le_bytes() || key)`. Keys are plain strings such
//! as `"train"` or `"capacity/adaptive-single/12/3/corrupt"`, so adding a
//! new stage never shifts the random streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive(global: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
