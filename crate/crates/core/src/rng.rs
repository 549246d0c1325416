//! Seeded random streams.
//!
//! Every stochastic routine in the crate takes a `&mut SimRng`. A run is
//! identified by one 64-bit seed; independent consumers (parallel chains,
//! dataset generation, parameter init) get their own stream via
//! [`stream`], which keeps the ChaCha key fixed and selects a distinct
//! stream id. Streams with different ids never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Well-known stream ids so different subsystems never share a stream.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DATASET: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const CHAINS: u64 = 4;
    pub const SAMPLING: u64 = 5;
    /// First id handed out by [`super::chain_stream`].
    pub const CHAIN_BASE: u64 = 1 << 32;
}

/// Root generator for a seed (stream 0).
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `id` derived from `seed`.
pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream for the `index`-th parallel Gibbs chain of a run.
pub fn chain_stream(seed: u64, index: u64) -> SimRng {
    stream(seed, streams::CHAIN_BASE + index)
}
