//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`ChaCha8Rng`], whose output
//! stream is fixed by its algorithm and identical on every platform. Derived
//! streams are obtained with [`split_seed`]: the master seed is XOR-ed with
//! the stream index and the result seeds a fresh generator whose first
//! 64-bit output is the derived seed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type DapoRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> DapoRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of stream `index` from `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(master ^ index).next_u64()
}

/// Uniform draw from (0, 1], never exactly zero.
pub fn open_unit(rng: &mut impl Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Dirichlet(alpha, ..., alpha) with alpha = 1, via normalized Exp(1) draws.
pub fn dirichlet_ones(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| -open_unit(rng).ln()).collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

pub fn standard_normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
