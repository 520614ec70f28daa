//! Seedable randomness.
//!
//! Every random quantity in the crate is drawn from a [`RngState`], which
//! wraps the ChaCha stream cipher with 8 rounds (`rand_chacha::ChaCha8Rng`).
//! The 64-bit seed is expanded into the 256-bit ChaCha key by
//! `SeedableRng::seed_from_u64` (a PCG32 expansion fixed by `rand_core`), so
//! the raw `u64` sequence for a given `(seed, stream)` is identical on every
//! platform.
//!
//! Independent streams share a key and differ in the 64-bit ChaCha stream
//! (nonce) word. Two streams with different ids never produce overlapping
//! keystream blocks.
//!
//! Consumption contract:
//!
//! - [`RngState::uniform`] and [`RngState::uniform_open`] use one `u64`.
//! - [`RngState::standard_normal`] uses exactly two `u64` draws (Box–Muller,
//!   cosine branch only, no rejection).
//! - [`RngState::below`] uses one `u64` (widening multiply, no rejection).
//!
//! Normal draws go through `f64::ln`, `f64::sqrt` and `f64::cos`; `sqrt` is
//! correctly rounded everywhere, `ln` and `cos` come from the platform libm
//! and may differ in the last bit between libm implementations.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    /// Stream 0 of `seed`.
    pub fn from_seed(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Independent stream `stream` derived from `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform on `(0, 1]`; safe to pass to `ln`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_MINUS_53
    }

    /// One N(0, 1) draw.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Integer in `0..n`. Bias is below `n / 2^64`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
