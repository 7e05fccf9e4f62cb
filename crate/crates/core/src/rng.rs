//! Seedable, portable random streams.
//!
//! Every random tensor draws from its own ChaCha8 stream: the generator is
//! keyed by `seed` (expanded with `SeedableRng::seed_from_u64`) and the
//! ChaCha stream id is set to the tensor's `stream` number. Two tensors
//! with different stream ids never share keystream, and the output is
//! identical on every platform.
//!
//! Gaussian variates use the Box–Muller transform. Each pair of uniforms
//! `(u1, u2)` is taken as `u = (next_u64 >> 11) * 2^-53`, with `u1` mapped
//! to `1 - u` so it lies in `(0, 1]`; the pair yields
//! `r cos(2 pi u2)` first and `r sin(2 pi u2)` second, `r = sqrt(-2 ln u1)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream ids reserved per purpose. Layer tensors use `LAYER_BASE + 4*layer + slot`.
pub mod streams {
    pub const LAYER_BASE: u64 = 0x100;
    pub const INITIAL_CONDITION: u64 = 0x1_0000_0000;
    pub const SHUFFLE: u64 = 0x2_0000_0000;
    pub const PROBE_INPUT: u64 = 0x3_0000_0000;
    pub const PROBE_WEIGHTS: u64 = 0x4_0000_0000;
    pub const MISC: u64 = 0x5_0000_0000;
}

#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Stream { rng, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`, rejection-sampled to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, std: f64) -> f64 {
        std * self.standard_normal()
    }

    pub fn fill_normal(&mut self, out: &mut [f64], std: f64) {
        for v in out {
            *v = self.normal(std);
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
