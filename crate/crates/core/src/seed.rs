//! Deterministic child-seed derivation.
//!
//! One root seed drives every random stage of the pipeline. Each stage asks
//! for a child seed under a stable label ("population/2023/enrollee"), so
//! stages can run in any order, or be skipped, without shifting the random
//! streams of the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `root` and a stage label.
pub fn child_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(b"/");
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// RNG for a pipeline stage, keyed by root seed and stage label.
pub fn rng_for(root: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(child_seed(root, label))
}
