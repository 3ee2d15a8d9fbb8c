//! Deterministic RNG streams.
//!
//! Every stochastic component owns a private stream derived from a user seed
//! and a structural index (restart number, Monte-Carlo trial, ...). Streams
//! are built by writing the seed and index directly into a ChaCha key, so
//! results are reproducible bit for bit across runs, platforms, and worker
//! counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream `index` of the generator family keyed by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Stream for one Monte-Carlo trial of one noise level.
pub fn trial_stream(seed: u64, sigma_index: usize, trial: u32) -> ChaCha8Rng {
    substream(seed, ((sigma_index as u64) << 32) | trial as u64)
}
