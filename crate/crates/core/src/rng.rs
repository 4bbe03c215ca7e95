//! Seeded randomness. One generator algorithm is used everywhere so that a
//! recorded seed fully determines a run; the algorithm name goes into the
//! run manifest.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Manifest identifier for the generator algorithm.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Root generator for a run.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for a named sub-task of a run. Streams with the
/// same seed but different ids never overlap, so components (channel
/// sampling, weight init, batch shuffling, ...) can draw independently.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
