//! Seeded random streams. Every consumer (initialisation, per-epoch
//! shuffling, corpus generation) draws from its own ChaCha8 stream of the
//! run seed, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_GRADCHECK: u64 = 2;
pub const STREAM_SYNTH_DIRECTIONS: u64 = 16;
pub const STREAM_SYNTH_SPLIT: u64 = 32;
/// Shuffle streams occupy `STREAM_SHUFFLE + epoch`.
pub const STREAM_SHUFFLE: u64 = 1 << 32;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
