//! Portable random stream for the annealer.
//!
//! PCG64 (XSL-RR 128/64) seeded through `seed_from_u64`. Uniforms and bounded
//! integers are derived here rather than through `rand` distributions so the
//! mapping from raw words to draws is fixed by this file alone.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

/// Smallest positive uniform; substituted for an exact zero before taking a logarithm.
pub const MIN_UNIFORM: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SaRng {
    inner: Pcg64,
}

impl SaRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: Pcg64::seed_from_u64(seed) }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * MIN_UNIFORM
    }

    /// Uniform integer in `0..n` (Lemire's multiply-and-reject). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n = n as u64;
        let mut m = self.inner.next_u64() as u128 * n as u128;
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = self.inner.next_u64() as u128 * n as u128;
            }
        }
        (m >> 64) as usize
    }
}
