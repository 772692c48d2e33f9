//! Seeded random streams.
//!
//! Every round draws from its own ChaCha8 stream keyed by `(seed, round_index)`,
//! so rounds can be generated in any order or in parallel batches and still
//! reproduce the same transcript. Session-level decisions (which rounds Bob
//! discloses for the error check) use a reserved stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream id reserved for session-level draws; round indices never reach it.
pub const SESSION_STREAM: u64 = u64::MAX;

/// Random stream for one protocol round.
pub fn round_stream(seed: u64, round_index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round_index);
    rng
}

/// Random stream for post-transmission session steps.
pub fn session_stream(seed: u64) -> SimRng {
    round_stream(seed, SESSION_STREAM)
}

/// Derives the seed of the `index`-th child experiment (sweep point,
/// repeated session) from a base seed. SplitMix64 finalizer.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
