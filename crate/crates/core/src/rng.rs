//! Seeded random streams.
//!
//! Every stochastic routine takes a caller-owned stream. Parallel work never
//! shares a stream: each task derives its own with [`substream`] from a
//! `(seed, index)` pair, so results do not depend on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Stream = ChaCha8Rng;

/// A stream seeded from a single `u64`.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `(seed, index)` into a new seed (SplitMix64 finalizer).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for task `index` of a job seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> Stream {
    stream(sub_seed(seed, index))
}
