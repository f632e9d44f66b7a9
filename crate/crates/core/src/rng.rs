//! Seedable, portable random streams.
//!
//! Every random quantity in this crate is drawn from a ChaCha8 stream whose
//! seed is derived by a splitmix64 chain over integer labels, so a run is a
//! pure function of its seeds:
//!
//! * experiment trial `i` uses `substream(master, TRIAL_TAG, i)`,
//! * the channel entry block for (BS `b`, user `k`) uses
//!   `substream(channel_seed, b, k)` — one substream per (trial, entity).
//!
//! Normal variates use the Marsaglia polar method with `libm::log` rather
//! than a ziggurat, because std's transcendentals are not guaranteed to be
//! bit-identical across platforms and we want channel draws to be.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tag for per-trial substreams derived from an experiment master seed.
pub const TRIAL_TAG: u64 = 0x7472_6961_6c00_0001; // "trial", fixed forever

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `(seed, a, b)` into a single substream seed.
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut s = seed;
    let mut out = splitmix64(&mut s);
    s ^= a.wrapping_mul(GOLDEN);
    out ^= splitmix64(&mut s);
    s ^= b.wrapping_mul(GOLDEN).rotate_left(32);
    out ^ splitmix64(&mut s)
}

/// A ChaCha8 stream for the `(a, b)` substream of `seed`.
pub fn substream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, a, b))
}

/// Two independent standard normal variates (Marsaglia polar method).
pub fn standard_normal_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    loop {
        let u = 2.0 * rng.gen::<f64>() - 1.0;
        let v = 2.0 * rng.gen::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let factor = (-2.0 * libm::log(s) / s).sqrt();
            return (u * factor, v * factor);
        }
    }
}

/// One draw from the circularly-symmetric complex Gaussian CN(0, 1):
/// real and imaginary parts are independent N(0, 1/2).
pub fn complex_cn01<R: Rng>(rng: &mut R) -> Complex64 {
    let (a, b) = standard_normal_pair(rng);
    Complex64::new(a * std::f64::consts::FRAC_1_SQRT_2, b * std::f64::consts::FRAC_1_SQRT_2)
}
