//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a ChaCha stream whose seed
//! is derived from a tuple of integers (run seed, scanline, ray, layer, ...).
//! Streams never depend on scheduling, so parallel and serial runs agree.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of keys into one 64-bit seed.
pub fn mix(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x5EED_u64, |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// Deterministic stream for the given key tuple.
pub fn stream(keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(keys))
}

// Stream domains, so that e.g. (seed, 3) for jitter and for scatterers differ.
pub(crate) const DOMAIN_SCATTERER: u64 = 1;
pub(crate) const DOMAIN_JITTER: u64 = 2;
pub(crate) const DOMAIN_LAYER: u64 = 3;
pub(crate) const DOMAIN_CROP: u64 = 4;
pub(crate) const DOMAIN_SPLIT: u64 = 5;
pub(crate) const DOMAIN_PHANTOM: u64 = 6;
pub(crate) const DOMAIN_SAMPLE: u64 = 7;
