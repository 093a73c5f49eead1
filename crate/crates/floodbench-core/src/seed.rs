//! Deterministic RNG plumbing.
//!
//! Every random draw in the suite flows from one master seed through named
//! sub-streams, so adding a consumer (a new model, another event) never
//! perturbs the draws of existing ones. Sub-seeds are the first eight bytes
//! of `sha256(master_le || tag)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a named sub-seed from the master seed.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[0..8].try_into().expect("digest >= 8 bytes"))
}

/// RNG for the named sub-stream.
pub fn stream_rng(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}
