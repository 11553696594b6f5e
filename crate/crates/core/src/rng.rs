//! Seeded, stream-split random number generation.
//!
//! Every consumer draws from a ChaCha8 stream addressed by
//! `(seed, purpose, index)`, so results do not depend on evaluation order or
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; keeps independent draws from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Permutations = 1,
    Design = 2,
    Errors = 3,
    Envelope = 4,
    Data = 5,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
