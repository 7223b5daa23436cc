//! Seedable, splittable random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. Its generator is a
//! xoshiro256++ whose 64-bit seed is
//!
//! ```text
//! seed = splitmix64(master_seed ^ splitmix64(stream_id ^ GOLDEN_GAMMA))
//! ```
//!
//! and the 256-bit state is expanded from that seed with splitmix64 (the
//! `seed_from_u64` rule of `rand_xoshiro`). Child streams apply the same rule
//! with the parent's derived seed as master, so every stream in an experiment
//! is a pure function of the master seed and its path of ids.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::matrix::Matrix;
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream_id` under `master_seed`.
pub fn mix_seed(master_seed: u64, stream_id: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(stream_id ^ GOLDEN_GAMMA))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
            rng: Xoshiro256PlusPlus::seed_from_u64(mix_seed(master_seed, stream_id)),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream; does not advance `self`.
    pub fn child(&self, sub_id: u64) -> RngStream {
        RngStream::new(mix_seed(self.master_seed, self.stream_id), sub_id)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Draws an index from unnormalized non-negative `weights` by inversion.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        // Rounding can leave `u` marginally above the last cumulative weight.
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// `rows x cols` matrix of i.i.d. `N(mean, std²)` draws, filled row-major.
pub fn gaussian_matrix(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
) -> Result<Matrix> {
    if !(std >= 0.0) {
        return Err(Error::NegativeStd(std));
    }
    if std == 0.0 {
        return Ok(Matrix::filled(rows, cols, mean));
    }
    let data = (0..rows * cols).map(|_| rng.normal(mean, std)).collect();
    Ok(Matrix::from_raw(rows, cols, data))
}
