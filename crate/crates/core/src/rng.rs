//! Seed splitting: every consumer of randomness gets its own stream derived
//! from one experiment seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A derived integer seed, for APIs that take `u64` seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    self::stream(seed, stream).next_u64()
}
