//! Counter-based seeding. Every random stream is keyed by
//! `(seed, sample, stream)` so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a base seed with a sample counter.
pub fn derive_seed(seed: u64, sample: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(sample.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn keyed_rng(seed: u64, sample: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, sample));
    rng.set_stream(stream);
    rng
}
