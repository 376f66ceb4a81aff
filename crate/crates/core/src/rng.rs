//! Seeded random streams.
//!
//! Every random draw in the engine comes from SplitMix64 (Steele, Lea and
//! Flood 2014), seeded with `global_seed ^ stream_index`. The state is the
//! raw 64-bit seed; uniform reals take the top 53 bits of each output. Both
//! rules are simple enough to mirror in any language.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// A reproducible random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: SplitMix64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            inner: SplitMix64::from_seed(seed.to_le_bytes()),
        }
    }

    /// Stream for the `index`-th unit of work under `global_seed`.
    pub fn derive(global_seed: u64, index: u64) -> Self {
        Stream::new(global_seed ^ index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// `count` distinct indices from `0..n`, excluding `exclude`, drawn
    /// without replacement by a partial Fisher-Yates shuffle.
    pub fn sample_distinct(&mut self, n: usize, count: usize, exclude: Option<usize>) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).filter(|&i| Some(i) != exclude).collect();
        let count = count.min(pool.len());
        for i in 0..count {
            let j = i + self.below(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}
