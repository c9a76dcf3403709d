//! Seeded deterministic random number generation.
//!
//! All stochastic call sites in the crate draw from [`DetRng`], a thin wrapper
//! around the ChaCha8 counter-based generator. The wrapper derives every float
//! from raw `next_u64` output with fixed arithmetic, so streams are stable
//! across platforms and dependency upgrades. Generators are threaded
//! explicitly; there is no global RNG state.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic RNG stream. Cloning forks the stream at its current position.
#[derive(Clone, Debug)]
pub struct DetRng {
    inner: ChaCha8Rng,
}

impl DetRng {
    pub fn seed_from(seed: u64) -> Self {
        DetRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derive an independent child stream, e.g. one per record when generating
    /// datasets in parallel. The (seed, index) pair is mixed through SplitMix64
    /// so nearby indices do not yield correlated streams.
    pub fn derive(seed: u64, index: u64) -> Self {
        DetRng::seed_from(splitmix64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1): the top 53 bits of a `u64` scaled by 2^-53.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller. Consumes two uniforms per pair; the
    /// second value of each pair is discarded to keep call sites stateless.
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Laplace(location 0, scale 1) by inverse CDF: u in (-1/2, 1/2),
    /// x = -sign(u) * ln(1 - 2|u|). Variance is 2.
    pub fn laplace(&mut self) -> f64 {
        let u = self.uniform() - 0.5;
        let x = -(1.0 - 2.0 * u.abs()).ln();
        if u < 0.0 {
            -x
        } else {
            x
        }
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices sampled uniformly from [0, n), returned sorted.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut all: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates: after k swaps the prefix is a uniform sample.
        for i in 0..k {
            let j = i + self.index(n - i);
            all.swap(i, j);
        }
        let mut picked = all[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
