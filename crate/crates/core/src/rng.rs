//! Seed derivation. Every random stream in a run is derived from the single
//! experiment seed through [`derive_seed`], so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a; stable across platforms and compiler versions.
pub fn stable_hash(key: &str) -> u64 {
    key.bytes().fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// `seed XOR hash(key)`.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    seed ^ stable_hash(key)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
