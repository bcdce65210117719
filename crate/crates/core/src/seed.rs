//! Seed fan-out.
//!
//! A run has one master seed. Each consumer draws from its own stream whose
//! seed is `splitmix64(master + stream_id * 0x9E37_79B9_7F4A_7C15)`, with the
//! fixed stream ids below. Changing how many numbers one stream consumes
//! (for example the batch size changing the sampling sequence) never shifts
//! another stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Split = 2,
    Sampling = 3,
    AttentionInit = 4,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sub_seed(master: u64, stream: Stream) -> u64 {
    splitmix64(master.wrapping_add((stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    rng_from(sub_seed(master, stream))
}
