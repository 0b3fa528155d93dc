//! Reproducible per-path noise streams and order-stable reductions.
//!
//! Each Monte Carlo path owns an independent counter-based stream keyed by
//! `(master_seed, path_index)`, so any scheduling of paths across threads
//! reproduces the same increments bit-for-bit. Aggregation uses a fixed
//! pairwise summation order for bit-stable reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64-style finalizer, used to whiten the (seed, index) key.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A splittable Gaussian increment stream for one path.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    pub master_seed: u64,
    pub path_index: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, path_index: u64) -> NoiseStream {
        let mut key = [0u8; 32];
        let s = mix(master_seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let words = [
            mix(s ^ 0xa076_1d64_78bd_642f),
            mix(s.wrapping_add(path_index).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            mix(path_index ^ 0xe703_7ed1_a0b4_28db),
            mix(s ^ path_index.rotate_left(32)),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        NoiseStream { master_seed, path_index, rng: ChaCha8Rng::from_seed(key) }
    }

    /// Next standard normal variate.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Brownian increment over a step of length `dt`, one per dimension.
    pub fn gaussian_increment(&mut self, dim: usize, dt: f64) -> Vec<f64> {
        let s = dt.sqrt();
        (0..dim).map(|_| s * self.normal()).collect()
    }

    /// Next uniform variate on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Derives a decorrelated sub-seed for an independent estimator stage.
pub fn sub_seed(master_seed: u64, stage: u64) -> u64 {
    mix(master_seed ^ stage.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Fixed-order pairwise summation: deterministic regardless of how the
/// terms were produced, and more accurate than naive accumulation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Mean and standard error of a sample, computed with pairwise sums.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<f64> = {
            let mut s = NoiseStream::new(7, 42);
            (0..10).map(|_| s.normal()).collect()
        };
        let b: Vec<f64> = {
            let mut s = NoiseStream::new(7, 42);
            (0..10).map(|_| s.normal()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ_across_paths_and_seeds() {
        let mut a = NoiseStream::new(7, 0);
        let mut b = NoiseStream::new(7, 1);
        let mut c = NoiseStream::new(8, 0);
        let (x, y, z) = (a.normal(), b.normal(), c.normal());
        assert!(x != y && x != z && y != z);
    }

    #[test]
    fn pairwise_sum_matches_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
    }

    #[test]
    fn mean_stderr_on_known_sample() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let var: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((se - (var / 4.0).sqrt()).abs() < 1e-15);
    }
}
