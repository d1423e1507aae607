//! Seeded RNG streams for reproducible runs.
//!
//! Everything stochastic in the crate draws from a [`ChaCha8Rng`] derived
//! from a master seed plus a stream id. Work items (scenes, chains,
//! benchmark cells) get their own stream so results do not depend on
//! scheduling or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for `stream` under a master `seed`. Streams are mutually
/// independent; the same (seed, stream) pair always yields the same
/// sequence.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
