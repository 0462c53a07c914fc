//! Seeded random streams.
//!
//! Every stochastic component draws from ChaCha8 seeded through
//! `seed_from_u64`, with an explicit stream id per independent consumer
//! (ensemble member, training round). ChaCha output is specified
//! bit-for-bit, so results reproduce across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed` on stream 0.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an independent stream, e.g. one per ensemble member.
pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
