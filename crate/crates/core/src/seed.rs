//! Seeded randomness.
//!
//! Every stochastic stage draws from [`Rng`], a xoshiro256++ generator whose
//! 256-bit state is expanded from a 64-bit seed with SplitMix64. Both are
//! fully specified integer algorithms, so a seed reproduces the same stream on
//! every platform. Independent substreams are keyed by hashing a base seed
//! together with a tuple of integers (see [`derive`]).

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a substream seed from `base` and a key path.
pub fn derive(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(mix64(base), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Stable tags for the stages that share an instance seed.
pub mod stream {
    pub const GRAPH: u64 = 0x0067_7261_7068;
    pub const WALKS: u64 = 0x0077_616c_6b73;
    pub const EMBED: u64 = 0x0065_6d62_6564;
    pub const LAYOUT: u64 = 0x6c61_796f_7574;
    pub const INIT: u64 = 0x696e_6974;
    pub const DROPOUT: u64 = 0x6472_6f70;
    pub const BATCH: u64 = 0x0062_6174_6368;
}
