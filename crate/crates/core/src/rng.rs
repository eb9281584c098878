//! Seeded random streams.
//!
//! Every stream is a ChaCha12 keystream selected by `(seed, stream_id)`. ChaCha's
//! 64-bit stream parameter gives disjoint sequences for distinct ids, so named
//! substreams can be handed to independent work units (episodes, generated
//! samples) without changing results under any parallel schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives a fresh stream keyed by this stream's identity, a name and an index.
    /// Independent of how many values have been drawn from `self`.
    pub fn substream(&self, label: &str, index: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(fnv1a(label) ^ splitmix64(index)));
        RngStream::new(self.seed, id)
    }

    /// `n` i.i.d. standard normal draws.
    pub fn gaussian(&mut self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("gaussian: n must be at least 1"));
        }
        Ok((0..n).map(|_| self.normal()).collect())
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::InsufficientSamples(format!(
                "cannot choose {k} distinct items out of {n}"
            )));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_draws_rejected() {
        let mut rng = RngStream::new(1, 0);
        assert!(rng.gaussian(0).is_err());
    }

    #[test]
    fn same_seed_and_stream_reproduce() {
        let a = RngStream::new(7, 3).gaussian(50).unwrap();
        let b = RngStream::new(7, 3).gaussian(50).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn distinct_streams_differ() {
        let a = RngStream::new(7, 0).gaussian(100).unwrap();
        let b = RngStream::new(7, 1).gaussian(100).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn substream_ignores_parent_position() {
        let parent = RngStream::new(11, 5);
        let mut advanced = parent.clone();
        advanced.gaussian(17).unwrap();
        let a = parent.substream("episode", 4).gaussian(8).unwrap();
        let b = advanced.substream("episode", 4).gaussian(8).unwrap();
        assert_eq!(a, b);
        let c = parent.substream("episode", 5).gaussian(8).unwrap();
        assert_ne!(a, c);
        let d = parent.substream("generation", 4).gaussian(8).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn gaussian_mean_of_a_million_draws() {
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let mean = rng.gaussian(n).unwrap().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn choose_distinct_is_distinct() {
        let mut rng = RngStream::new(3, 0);
        let mut picks = rng.choose_distinct(20, 20).unwrap();
        picks.sort();
        assert_eq!(picks, (0..20).collect::<Vec<_>>());
        assert!(rng.choose_distinct(3, 4).is_err());
    }
}
