//! Seeded, platform-independent random streams.
//!
//! Each [`RngState`] is a ChaCha8 stream keyed by a 64-bit seed. Independent
//! child streams are derived from the seed and a path of indices (never from
//! the parent's position), so sample `i` of iteration `k` always sees the same
//! numbers regardless of how many other samples were drawn or in which order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = mix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self { seed, inner: ChaCha8Rng::from_seed(key) }
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the child stream at `index`; pure function of (seed, index).
    pub fn child_seed(&self, index: u64) -> u64 {
        mix64(self.seed ^ mix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
    }

    pub fn child(&self, index: u64) -> Self {
        Self::new(self.child_seed(index))
    }

    /// Child reached by following `path` one index at a time.
    pub fn derive(&self, path: &[u64]) -> Self {
        let mut seed = self.seed;
        for &i in path {
            seed = Self::new(seed).child_seed(i);
        }
        Self::new(seed)
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`; returns `lo` when the interval is empty.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Log-uniform on `[lo, hi)`, both positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (self.uniform(lo.ln(), hi.ln())).exp()
    }

    /// Uniform integer in the inclusive range.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.gen_range(lo..=hi)
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal via Box-Muller (one of the pair is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
