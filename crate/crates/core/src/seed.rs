//! Seed derivation. A run is driven by one master seed; every random stream
//! (weight init, shuffling, jitter, synthetic data, fold assignment) gets its
//! own 64-bit seed from [`derive_seed`].
//!
//! The derivation is `splitmix64(master ^ fnv1a64(label))`, where `label`
//! names the stream (e.g. `"pretrain.layer1.init"`). Both functions are
//! fixed here so a seed is reproducible across builds and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used for every stochastic operation in the crate.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label.as_bytes()))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
