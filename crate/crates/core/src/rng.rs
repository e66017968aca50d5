//! Seeded random streams.
//!
//! Every consumer of randomness (parameter init, shuffling, batch splitting,
//! corpus generation) draws from its own stream, keyed by the run seed, the
//! concern and an index such as the epoch. Adding an evaluation or changing
//! the eval cadence therefore never shifts any other stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The consumer a random stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concern {
    Init,
    Shuffle,
    Split,
    Generate,
}

impl Concern {
    fn tag(self) -> u64 {
        match self {
            Concern::Init => 0x494e_4954,
            Concern::Shuffle => 0x5348_5546,
            Concern::Split => 0x5350_4c54,
            Concern::Generate => 0x4745_4e52,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives the 64-bit seed of the stream `(seed, concern, index)`.
pub fn stream_seed(seed: u64, concern: Concern, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ concern.tag());
    splitmix64(h ^ index)
}

pub fn stream(seed: u64, concern: Concern, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, concern, index))
}
