//! Seed derivation for reproducible parallel Monte Carlo.
//!
//! Every stochastic draw in the crate comes from a [`ChaCha8Rng`] seeded by a
//! value derived from a master seed and a stream index. Work items therefore
//! produce the same output regardless of which thread runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep independent uses of the same index from colliding.
pub mod domain {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0001;
    pub const BLOCK_SHELVING: u64 = 0x626c_6f63_6b00_0002;
    pub const FRAME: u64 = 0x6672_616d_6500_0003;
    pub const SPLIT: u64 = 0x7370_6c69_7400_0004;
    pub const TREE: u64 = 0x7472_6565_0000_0005;
    pub const SCENARIO: u64 = 0x7363_656e_0000_0006;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, domain, index)`.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(domain)) ^ index)
}

pub fn stream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, domain, index))
}

pub fn from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
