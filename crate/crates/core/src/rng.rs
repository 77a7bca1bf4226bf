//! Coordinate-keyed randomness.
//!
//! Every variate is a pure function of `(master seed, stream, neuron, time, draw)`,
//! so the backward clan construction can visit coordinates in any order and
//! still see the same field. Sequential consumers (graph sampling, replicas)
//! get a ChaCha stream seeded from a derived key.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Purpose tags. Distinct tags give independent streams at the same coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    /// The spontaneous Bernoulli(δ) field ξ.
    Spontaneous = 0x5350_4f4e,
    /// Range selection in the Kalikow mixture.
    Range = 0x5241_4e47,
    /// Spike/no-spike decision given the range.
    Value = 0x5641_4c55,
    /// Forward-time dynamics.
    Forward = 0x464f_5257,
    /// Random graph sampling.
    Graph = 0x4752_4150,
    /// Replica seeds.
    Replica = 0x5245_504c,
    /// Initial conditions and conditioning experiments.
    Auxiliary = 0x4155_5849,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state.wrapping_add(GOLDEN) ^ word)
}

/// Counter-based source of uniforms keyed by space-time coordinates.
#[derive(Debug)]
pub struct RandomCoordinateSource {
    seed: u64,
    draws: AtomicU64,
}

impl Clone for RandomCoordinateSource {
    fn clone(&self) -> Self {
        Self::new(self.seed)
    }
}

impl RandomCoordinateSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            draws: AtomicU64::new(0),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of variates handed out so far. The total is independent of the
    /// order in which coordinates were visited.
    pub fn draws(&self) -> u64 {
        self.draws.load(Ordering::Relaxed)
    }

    #[inline]
    pub fn raw(&self, stream: Stream, neuron: usize, time: i64, draw: u64) -> u64 {
        self.draws.fetch_add(1, Ordering::Relaxed);
        let mut h = mix64(self.seed ^ GOLDEN);
        h = absorb(h, stream as u64);
        h = absorb(h, neuron as u64);
        h = absorb(h, time as u64);
        absorb(h, draw)
    }

    /// Uniform variate in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&self, stream: Stream, neuron: usize, time: i64, draw: u64) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        (self.raw(stream, neuron, time, draw) >> 11) as f64 / DEN
    }

    #[inline]
    pub fn bernoulli(&self, stream: Stream, neuron: usize, time: i64, p: f64) -> bool {
        self.uniform(stream, neuron, time, 0) < p
    }

    /// A 64-bit key for an independent sub-stream.
    pub fn derive_seed(&self, stream: Stream, index: u64) -> u64 {
        let mut h = mix64(self.seed ^ GOLDEN);
        h = absorb(h, stream as u64);
        h = absorb(h, index);
        absorb(h, 0x5345_4544)
    }

    /// Independent coordinate source for replica `index`.
    pub fn child(&self, index: u64) -> RandomCoordinateSource {
        RandomCoordinateSource::new(self.derive_seed(Stream::Replica, index))
    }

    /// Sequential generator for consumers that draw in a fixed order.
    pub fn sequential(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive_seed(stream, index))
    }
}
