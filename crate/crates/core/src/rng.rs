//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a
//! 64-bit seed derived from a root seed and a path of integer tags. Two
//! streams with different tag paths are statistically independent, and the
//! same path always yields the same stream, so work can be spread over any
//! number of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the uses of a root seed apart.
pub mod tag {
    pub const ASSIGNMENT: u64 = 1;
    pub const LOCATION: u64 = 2;
    pub const REPLICATION: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const ORACLE: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `root` one at a time.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(root: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, parts))
}
