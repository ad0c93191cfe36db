//! Seeded random number generation. Every stochastic operation takes an
//! explicit seed; per-item substreams are derived by hashing a label into
//! the stream id, which keeps parallel schedules deterministic.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for a top-level seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream for `(seed, label)`. Items processed in any order
/// (or concurrently) see identical randomness.
pub fn rng_for_item(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label));
    rng
}

/// Derived scalar seed for `(seed, label)`, for operations that take plain
/// seeds.
pub fn item_seed(seed: u64, label: &str) -> u64 {
    use rand::Rng;
    rng_for_item(seed, label).gen()
}

fn fnv1a(s: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
