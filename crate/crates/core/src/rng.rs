//! Seed plumbing.
//!
//! Every stochastic routine in this crate draws from a [`ChaCha8Rng`] that is
//! derived from an explicit `u64` seed. Multi-run experiments give each run
//! its own independent substream derived from `(master seed, run index)`, so
//! results do not depend on scheduling order when runs execute in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for a whole experiment, derived from the user-facing seed.
pub fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator keyed by `seed`.
///
/// Substreams with different indices never overlap, so per-run generators
/// can be handed to worker threads without any coordination.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix two words into one well-scrambled word (splitmix64 finalizer).
///
/// Used to fold structured identifiers — run indices, agent indices,
/// iteration counters — into seeds for derived generators.
pub fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold the bit patterns of a float slice into one word.
///
/// Lets a stateless objective derive a deterministic per-evaluation seed from
/// the evaluation point itself.
pub fn hash_coords(seed: u64, coords: &[f64]) -> u64 {
    let mut acc = seed;
    for &x in coords {
        acc = mix64(acc, x.to_bits());
    }
    acc
}
