//! Deterministic derivation of independent random substreams from one root
//! seed. Every consumer of randomness gets its own [`ChaCha8Rng`] keyed by
//! `(root, purpose, indices...)`, so adding or reordering consumers never
//! perturbs the draws of another, and parallel execution order cannot change
//! results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. One per purpose; values are arbitrary but fixed.
pub mod tag {
    /// Independent experiment replication.
    pub const REP: u64 = 1;
    /// Initial skill profile of one student.
    pub const PROFILE: u64 = 2;
    /// History-generation session of one student.
    pub const HISTORY: u64 = 3;
    /// Evaluation session of one `(algorithm, student)` pair.
    pub const SESSION: u64 = 4;
}

/// splitmix64 finalizer; a bijection on `u64` with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Fold `parts` into `root`, one splitmix64 round per part.
pub fn mix(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ p))
}

/// An independent generator for the substream identified by `parts`.
pub fn rng_for(root: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(root, parts))
}
