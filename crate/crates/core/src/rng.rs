//! Seed derivation. Every random stream in the simulator is a ChaCha8 generator
//! keyed by the experiment seed plus a short tag path, so results do not depend
//! on thread scheduling or on the order streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a list of stream tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream tags used across modules.
pub mod tag {
    pub const SYNTH: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const FEWSHOT: u64 = 3;
    pub const COLDSTART: u64 = 4;
    pub const EDGE_SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PARTICIPATION: u64 = 7;
    pub const LOCAL: u64 = 8;
    pub const PROPOSER: u64 = 9;
    pub const DP_NOISE: u64 = 10;
    pub const MASK: u64 = 11;
    pub const EVAL: u64 = 12;
}
