//! Named, independent random streams derived from one master seed.
//!
//! Every random choice in the pipeline (image masks, text masks, description
//! selection, augmentation, shuffling, initialization) draws from a stream
//! keyed by `(seed, tag)`. Streams with different tags are statistically
//! independent, and the same key always replays the same draws.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A deterministic single-consumer random stream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

/// Derive the stream for `(seed, stream_tag)`.
pub fn seeded_rng(seed: u64, stream_tag: &str) -> RandomStream {
    let mut hasher = Sha256::new();
    hasher.update(b"kgmm-stream\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(stream_tag.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    RandomStream {
        inner: ChaCha8Rng::from_seed(key),
    }
}

impl RandomStream {
    /// Child stream, `seeded_rng(seed, "{parent}/{tag}")` style, without the caller
    /// having to remember the parent tag.
    pub fn fork(&mut self, tag: &str) -> RandomStream {
        let salt = self.inner.next_u64();
        seeded_rng(salt, tag)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(rand_distr::StandardNormal)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
