//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from a run seed and a fixed stream id, so adding a consumer never shifts
//! the draws seen by another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Named stream ids used across the crate.
pub mod ids {
    pub const INIT: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const ENV: u64 = 3;
    pub const EVAL_START: u64 = 4;
    pub const EVAL_POLICY: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
    pub const TABULAR: u64 = 7;
    /// Dataset trajectories use `DATASET_BASE + trajectory attempt index`.
    pub const DATASET_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
