//! Counter-addressed Gaussian noise for measurement trajectories.
//!
//! Each `(seed, trajectory_id)` pair selects an independent ChaCha8 stream;
//! the standard normal with index `n` is built from stream words
//! `4n..4n+4` by Box–Muller, so any increment can be regenerated without
//! replaying the ones before it.

use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    trajectory_id: u64,
    substeps: u32,
    rng: ChaCha8Rng,
    next_index: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory_id);
        NoiseStream { seed, trajectory_id, substeps: 1, rng, next_index: 0 }
    }

    /// Build each Wiener increment from `substeps` finer ones. A stream with
    /// `substeps = 2` at step `dt` sees the same Brownian path as a stream
    /// with `substeps = 1` at `dt / 2`.
    pub fn with_substeps(mut self, substeps: u32) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory_id(&self) -> u64 {
        self.trajectory_id
    }

    pub fn substeps(&self) -> u32 {
        self.substeps
    }

    /// Standard normal number `index` of this stream.
    pub fn standard_normal(&mut self, index: u64) -> f64 {
        if index != self.next_index {
            self.rng.set_word_pos(index as u128 * 4);
        }
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        self.next_index = index + 1;
        // (0, 1] so the logarithm stays finite
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// Wiener increment `dW ~ N(0, dt)` for step `step`.
    pub fn increment(&mut self, step: u64, dt: f64) -> f64 {
        let n = self.substeps as u64;
        let scale = (dt / n as f64).sqrt();
        (0..n).map(|j| self.standard_normal(step * n + j)).sum::<f64>() * scale
    }
}
