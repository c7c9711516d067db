//! Seed derivation and scalar samplers.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose
//! seed is derived from `(base seed, tag, index)` with a SplitMix64 chain.
//! Streams are therefore independent of the order in which other streams are
//! consumed, which is what makes traces reproducible from a single seed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math;

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed, a stream tag and an index.
pub(crate) fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index)
}

/// Public seed derivation for independent Monte-Carlo runs.
pub fn run_seed(base: u64, run_index: u64) -> u64 {
    derive(base, 0x72756e73, run_index)
}

pub(crate) fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, index))
}

/// Uniform in `[0, 1)`, 53 mantissa bits.
pub(crate) fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Exponential with the given mean, by inversion.
pub(crate) fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u = uniform01(rng);
    -mean * math::ln(1.0 - u)
}

/// Normal via Box-Muller.
pub(crate) fn normal(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    let mut u1 = uniform01(rng);
    if u1 <= 0.0 {
        u1 = f64::MIN_POSITIVE;
    }
    let u2 = uniform01(rng);
    let r = math::sqrt(-2.0 * math::ln(u1));
    mean + sigma * r * math::cos(2.0 * core::f64::consts::PI * u2)
}
