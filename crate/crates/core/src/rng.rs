//! Seedable, stream-indexed random number generation.
//!
//! Every stochastic routine in the crate takes a [`RandomStream`] explicitly.
//! Streams are ChaCha8 generators addressed by `(seed, stream)`; two streams
//! with the same seed and different indices never overlap, so per-individual
//! work can be scheduled on any thread without changing the draws.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn standard_exponential(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One global stream for the shared parameters plus one stream per individual.
#[derive(Clone, Debug)]
pub struct ChainStreams {
    pub global: RandomStream,
    pub individuals: Vec<RandomStream>,
}

impl ChainStreams {
    pub fn new(seed: u64, n: usize) -> Self {
        Self {
            global: RandomStream::with_stream(seed, 0),
            individuals: (0..n)
                .map(|i| RandomStream::with_stream(seed, i as u64 + 1))
                .collect(),
        }
    }
}
