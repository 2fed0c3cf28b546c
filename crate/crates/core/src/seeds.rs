//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the splitmix64 generator, used as a 64-bit mixing function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `stream` of `replicate` under `master`. Distinct inputs give
/// statistically independent seeds.
pub fn derive_seed(master: u64, replicate: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
