//! Deterministic random number helpers.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded from a 64-bit seed.
//! Uniform draws are derived from raw 64-bit output by fixed bit
//! manipulation rather than through distribution adapters, so the exact
//! draw sequence is pinned by this crate and survives dependency upgrades.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed and a stream index into an independent stream seed
/// (SplitMix64 finalizer). Used to give each ray its own counter-based
/// generator so per-ray sampling is order-independent and parallelizable.
pub fn derive_stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A ChaCha8 generator for one logical stream of a seeded family.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, stream))
}

/// Uniform f64 in `[0, 1)` from the top 53 bits of one 64-bit draw.
pub fn u01<R: RngCore>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Uniform f64 in `(0, 1]`; safe as a log/rejection-sampler input.
pub fn u01_open<R: RngCore>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((rng.next_u64() >> 11) + 1) as f64 * SCALE
}

/// Unbiased uniform index in `[0, n)` via Lemire's widening-multiply
/// rejection. `n` must be nonzero.
pub fn uniform_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let n64 = n as u64;
    let mut x = rng.next_u64();
    let mut m = (x as u128) * (n64 as u128);
    let mut low = m as u64;
    if low < n64 {
        let threshold = n64.wrapping_neg() % n64;
        while low < threshold {
            x = rng.next_u64();
            m = (x as u128) * (n64 as u128);
            low = m as u64;
        }
    }
    (m >> 64) as usize
}
