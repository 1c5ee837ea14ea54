//! Derivation of independent RNG streams from a master seed.
//!
//! Each (master seed, purpose label) pair maps to its own generator, so adding
//! or removing a consumer (e.g. an attack stage) never perturbs the draws seen
//! by another (e.g. the training schedule).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes, folded with the master seed.
/// Stable across platforms and releases, unlike the stdlib hasher.
fn mix(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A seeded generator for one named purpose.
pub fn stream_rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master, label))
}
