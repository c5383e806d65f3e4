//! Deterministic seed derivation. All randomness in a run flows from one
//! root seed; each stage and test index derives its own stream so results
//! are reproducible and independent of execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over the root seed, a stage label, and an index.
pub fn derive(root: u64, label: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for b in root
        .to_le_bytes()
        .iter()
        .chain(label.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

pub fn rng(root: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(root, label, index))
}
