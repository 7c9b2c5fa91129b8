//! Deterministic random streams.
//!
//! Every stochastic step draws from its own stream keyed by the master seed
//! and a path of integer tags (replicate, dataset index, purpose), so output
//! never depends on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod tag {
    pub const REPLICATE: u64 = 1;
    pub const OBSERVED: u64 = 2;
    pub const IMPORTANCE: u64 = 3;
    pub const CALIBRATION: u64 = 4;
    pub const PERMUTATION: u64 = 5;
    pub const TRUE_POSTERIOR: u64 = 6;
    pub const OPTIMIZER: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tags.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}
