//! Deterministic seeded randomness with derived substreams.
//!
//! All randomness in the crate flows through [`RngStream`], a ChaCha12
//! generator addressed by a `(seed, stream_id)` pair. Distinct stream ids
//! select distinct keystreams of the same key, so substreams handed to
//! tasks, batches, and buffers never overlap, and a given pair reproduces
//! the same value sequence on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid_argument, Result};

/// Stream ids reserved by the crate. Per-task streams start at
/// [`streams::TASK_BASE`] so they cannot collide with the named ones.
pub mod streams {
    /// Task-size sampling during sequence generation.
    pub const SIZES: u64 = 1;
    /// Target-weight sequence generation.
    pub const WEIGHTS: u64 = 2;
    /// Task-order sampling for weighted orderings.
    pub const ORDERING: u64 = 3;
    /// Batch shuffling, replay draws and buffer insertions during training.
    pub const TRAIN: u64 = 4;
    /// Task `i` draws its generator weights and examples from `TASK_BASE + i`.
    pub const TASK_BASE: u64 = 1 << 32;
}

/// A seeded random stream. One stream per logical consumer; never share
/// a stream mutably between consumers.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// A fresh stream with the same seed and a different stream id,
    /// independent of how much of `self` has been consumed.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
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

/// Draw `dim` i.i.d. samples from N(mean, std^2).
///
/// `std == 0` yields the constant vector `mean`.
pub fn sample_gaussian_vector(
    rng: &mut RngStream,
    dim: usize,
    mean: f64,
    std: f64,
) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid_argument("dim must be positive"));
    }
    if !std.is_finite() || std < 0.0 {
        return Err(invalid_argument(format!(
            "std must be finite and non-negative, got {std}"
        )));
    }
    let normal = Normal::new(mean, std).map_err(|e| invalid_argument(e.to_string()))?;
    Ok((0..dim).map(|_| normal.sample(rng)).collect())
}
