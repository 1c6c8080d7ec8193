//! Seedable random streams.
//!
//! Every stochastic component draws from a [`RandomStream`] derived from the
//! master seed plus a path of integer tags (purpose, round, node, ...). A
//! stream's output therefore depends only on its path, never on the order in
//! which streams are created or on how work is spread across threads.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose tags used as the first path element when deriving streams.
pub mod tag {
    pub const SELECTION: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const GRADIENT: u64 = 3;
    pub const SLOT_NOISE: u64 = 4;
    pub const ANALOG_NOISE: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const DATASET: u64 = 7;
    pub const MODEL_INIT: u64 = 8;
    pub const MONTE_CARLO: u64 = 9;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic pseudo-random stream (ChaCha8 keyed from a seed path).
#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, &[])
    }

    /// Derives an independent stream from `seed` and a tag path.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut state = seed;
        let mut acc = splitmix64(&mut state);
        for &p in path {
            state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(acc);
            acc = splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RandomStream(ChaCha8Rng::from_seed(key))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        // Lemire's multiply-shift with rejection.
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.0.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Bernoulli trial with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_path_same_sequence() {
        let mut a = RandomStream::derive(7, &[tag::CHANNEL, 3, 4]);
        let mut b = RandomStream::derive(7, &[tag::CHANNEL, 3, 4]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_paths_diverge() {
        let mut a = RandomStream::derive(7, &[tag::CHANNEL, 3, 4]);
        let mut b = RandomStream::derive(7, &[tag::CHANNEL, 4, 3]);
        let mut c = RandomStream::derive(8, &[tag::CHANNEL, 3, 4]);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn uniform_ranges() {
        let mut r = RandomStream::new(1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = r.uniform_open0();
            assert!(v > 0.0 && v <= 1.0);
            assert!(r.below(5) < 5);
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut r = RandomStream::new(3);
        let mut v: Vec<usize> = (0..50).collect();
        r.shuffle(&mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }
}
