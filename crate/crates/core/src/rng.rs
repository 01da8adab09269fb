//! The documented 64-bit LCG shared by weight perturbation and random site
//! selection. Any implementation reproduces the same stream:
//!
//! ```text
//! state <- state * 6364136223846793005 + 1442695040888963407   (mod 2^64)
//! u      = (state >> 11) / 2^53                                  in [0, 1)
//! ```
//!
//! The state starts at the seed and is advanced before every draw.

pub const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
pub const INCREMENT: u64 = 1_442_695_040_888_963_407;

/// Perturbation factors are rounded to this grid.
pub const FACTOR_GRID: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(MULTIPLIER)
            .wrapping_add(INCREMENT);
        self.state
    }

    /// Uniform draw in `[0, 1)` with 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform factor in `[low, high]`, quantized to [`FACTOR_GRID`].
    pub fn next_factor(&mut self, low: f64, high: f64) -> f64 {
        let raw = low + (high - low) * self.next_f64();
        ((raw / FACTOR_GRID).round() * FACTOR_GRID).clamp(low, high)
    }

    /// Uniform index in `0..bound` (`bound > 0`).
    pub fn next_index(&mut self, bound: usize) -> usize {
        ((self.next_f64() * bound as f64) as usize).min(bound - 1)
    }
}
