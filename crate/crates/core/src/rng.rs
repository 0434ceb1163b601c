//! Seeded random streams.
//!
//! Every parallel unit of work (a permutation, a repetition) draws from its own
//! ChaCha stream keyed by the run seed, so results do not depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
