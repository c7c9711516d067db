//! Timing model for the discrete-event engine: per-player computation times
//! and per-message delays, both exponential, truncated into configured
//! windows and quantized to integer microseconds.
//!
//! Each player's mean computation time is `base + |N(0, sigma^2)|`, drawn
//! once per run, which makes the population heterogeneous: a few players are
//! persistently slow. Delays share one mean across all edges. Truncation
//! enforces the bounded-delay and bounded-gap assumptions the staleness
//! constants rely on.

use rand_chacha::ChaCha8Rng;

use crate::rng;

const TAG_COMP_MEAN: u64 = 0x636d65616e;
const TAG_COMP: u64 = 0x636f6d70;
const TAG_DELAY: u64 = 0x64656c6179;

/// All durations in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    /// Base of the per-player mean computation time.
    pub comp_mean_base_us: f64,
    /// Spread of the half-normal part of the per-player mean.
    pub comp_mean_sigma_us: f64,
    /// Truncation window for sampled computation times.
    pub comp_min_us: u64,
    pub comp_max_us: u64,
    /// Mean of the exponential message delay.
    pub delay_mean_us: f64,
    /// Truncation window for sampled delays.
    pub delay_min_us: u64,
    pub delay_max_us: u64,
}

impl TimingModel {
    /// Benchmark defaults: computation mean `1 ms + |N(0, (5 ms)^2)|`,
    /// delays exponential with mean `5 ms`, both truncated to
    /// `[100 us, 100 ms]`.
    pub fn benchmark_default() -> Self {
        Self {
            comp_mean_base_us: 1_000.0,
            comp_mean_sigma_us: 5_000.0,
            comp_min_us: 100,
            comp_max_us: 100_000,
            delay_mean_us: 5_000.0,
            delay_min_us: 100,
            delay_max_us: 100_000,
        }
    }

    pub fn validate(&self) -> bool {
        self.comp_min_us >= 1
            && self.comp_min_us <= self.comp_max_us
            && self.delay_min_us <= self.delay_max_us
            && self.comp_mean_base_us > 0.0
            && self.comp_mean_sigma_us >= 0.0
            && self.delay_mean_us >= 0.0
    }

    /// Per-player sampling streams for one run.
    pub fn player_streams(&self, seed: u64, player: usize) -> PlayerTiming {
        let mut mean_rng = rng::stream(seed, TAG_COMP_MEAN, player as u64);
        let noise = rng::normal(&mut mean_rng, 0.0, self.comp_mean_sigma_us);
        let comp_mean_us = self.comp_mean_base_us + crate::math::abs(noise);
        PlayerTiming {
            comp_mean_us,
            comp_window: (self.comp_min_us, self.comp_max_us),
            delay_mean_us: self.delay_mean_us,
            delay_window: (self.delay_min_us, self.delay_max_us),
            comp_rng: rng::stream(seed, TAG_COMP, player as u64),
            delay_rng: rng::stream(seed, TAG_DELAY, player as u64),
        }
    }
}

/// Sampling state of one player within one run.
#[derive(Debug, Clone)]
pub struct PlayerTiming {
    comp_mean_us: f64,
    comp_window: (u64, u64),
    delay_mean_us: f64,
    delay_window: (u64, u64),
    comp_rng: ChaCha8Rng,
    delay_rng: ChaCha8Rng,
}

fn quantize_into(raw_us: f64, window: (u64, u64)) -> u64 {
    let r = crate::math::round(raw_us);
    let q = if r <= 0.0 { 0 } else { r as u64 };
    q.clamp(window.0, window.1)
}

impl PlayerTiming {
    /// The run-constant mean computation time of this player.
    pub fn comp_mean_us(&self) -> f64 {
        self.comp_mean_us
    }

    /// Next computation duration, truncated and quantized.
    pub fn next_computation_us(&mut self) -> u64 {
        let raw = rng::exponential(&mut self.comp_rng, self.comp_mean_us);
        quantize_into(raw, self.comp_window)
    }

    /// Next message delay, truncated and quantized. Draws are consumed per
    /// outgoing message in receiver order, so streams are order-independent.
    pub fn next_delay_us(&mut self) -> u64 {
        let raw = rng::exponential(&mut self.delay_rng, self.delay_mean_us);
        quantize_into(raw, self.delay_window)
    }

    /// Untruncated delay draw, for statistics on the raw distribution.
    pub fn raw_delay_us(&mut self) -> f64 {
        rng::exponential(&mut self.delay_rng, self.delay_mean_us)
    }
}
