//! Seed ladder: every random consumer draws from its own ChaCha stream
//! addressed by `(seed, purpose, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream identifiers in use across the crate.
pub mod purpose {
    pub const PERTURBATION: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const INITIALIZATION: u64 = 3;
    pub const PROBE: u64 = 4;
    pub const SCENARIO: u64 = 5;
}

pub fn stream(seed: u64, purpose: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) ^ index);
    rng
}

/// A fresh child stream derived from a parent; consumes one `u64`.
pub fn split(parent: &mut Stream, purpose: u64) -> Stream {
    use rand::RngCore;
    stream(parent.next_u64(), purpose, 0)
}
