//! Seeded randomness shared by initialization, synthesis and the random
//! baseline. Everything funnels through SplitMix64 so a seed fully determines
//! every draw on every platform.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub type SeededRng = SplitMix64;

pub fn seeded(seed: u64) -> SeededRng {
    SplitMix64::seed_from_u64(seed)
}

/// Uniform draw in `[-scale, scale)`.
pub fn symmetric_uniform(rng: &mut SeededRng, scale: f64) -> f64 {
    scale * (2.0 * rng.random::<f64>() - 1.0)
}

/// Standard normal pair via Box-Muller.
pub fn gaussian_pair(rng: &mut SeededRng) -> (f64, f64) {
    // 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    (r * (TAU * u2).cos(), r * (TAU * u2).sin())
}

/// Fills a vector with independent standard normal draws.
pub fn gaussian_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let (a, b) = gaussian_pair(rng);
        out.push(a);
        out.push(b);
    }
    out.truncate(n);
    out
}
