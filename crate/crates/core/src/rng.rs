//! Seeding scheme.
//!
//! Every stream is a ChaCha12 generator seeded with `seed_from_u64`. Child
//! seeds are derived from a master seed by folding each path component
//! through the SplitMix64 finalizer:
//!
//! ```text
//! s_0 = splitmix64(master)
//! s_k = splitmix64(s_{k-1} ^ part_k)
//! ```
//!
//! so `(master, condition, repetition, stream)` maps to a well-mixed 64-bit
//! seed that never collides with its neighbours in practice.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |s, &p| splitmix64(s ^ p))
}

/// FNV-1a hash of a label, for keying seed streams by name.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
