//! Named-substream seed derivation.
//!
//! A single global seed expands into independent substreams keyed by name
//! (`"split"`, `"sampling"`, `"init"`, ...), so changing how one stage uses
//! randomness does not perturb the others. Derivation goes through SHA-256,
//! which keeps streams stable across platforms and rand versions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derive a 64-bit substream seed from a global seed and a stream name.
pub fn substream(global: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields >= 8 bytes"))
}

/// A deterministic RNG for the named substream of `global`.
pub fn rng(global: u64, name: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let seed: [u8; 32] = digest.into();
    ChaCha20Rng::from_seed(seed)
}
