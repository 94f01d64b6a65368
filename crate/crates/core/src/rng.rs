//! Seeded random streams.
//!
//! Every stochastic quantity is drawn from its own ChaCha8 stream whose
//! 256-bit key is expanded from a 64-bit key with SplitMix64. Stream keys
//! are derived from `(seed, tag, indices...)` by folding each component
//! through the SplitMix64 finalizer, so a stream depends only on its
//! coordinates and never on how many values other streams consumed.
//!
//! Distribution algorithms are fixed:
//!
//! * unit uniform: top 53 bits of `next_u64`, scaled by 2^-53, in `[0, 1)`
//! * exponential(rate): `-ln(1 - u) / rate`
//! * uniform integer in `[lo, hi]`: rejection sampling on `next_u64` with
//!   the largest multiple of the span as the acceptance zone, then modulo

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream tag for link capacities and per-pair loads.
pub const TAG_SCENARIO: u64 = 0x5343_454e;
/// Stream tag for per-pair interarrival times.
pub const TAG_ARRIVAL: u64 = 0x4152_5249;
/// Stream tag for per-pair holding times.
pub const TAG_HOLDING: u64 = 0x484f_4c44;
/// Stream tag for parallel worker seeds.
pub const TAG_WORKER: u64 = 0x574f_524b;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`, producing an independent 64-bit key.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut state = seed;
    let mut key = splitmix64(&mut state);
    for &p in parts {
        state = key ^ p.wrapping_mul(GOLDEN);
        key = splitmix64(&mut state);
    }
    key
}

/// A reproducible random stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn from_key(key: u64) -> Self {
        let mut state = key;
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(bytes),
        }
    }

    pub fn new(seed: u64, parts: &[u64]) -> Self {
        Self::from_key(derive_seed(seed, parts))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        -(1.0 - self.unit()).ln() / rate
    }

    /// Uniform integer in the closed range `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range [{lo}, {hi}]");
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        let span = span + 1;
        let zone = u64::MAX - (u64::MAX % span + 1) % span;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return lo + x % span;
            }
        }
    }

    /// Uniform real in `[lo, lo + width]`.
    pub fn uniform_real(&mut self, lo: f64, width: f64) -> f64 {
        lo + width * self.unit()
    }
}
