//! Deterministic RNG derivation for parallel Monte Carlo runs.
//!
//! All randomness in an experiment descends from a single 64-bit root seed.
//! Each trial gets its own ChaCha stream, keyed by `(cell, trial)`, so trials
//! can run on any number of threads in any order and still produce identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream-id layout: high 32 bits = cell index, low 32 bits = trial index.
pub fn trial_rng(root_seed: u64, cell: u32, trial: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(((cell as u64) << 32) | trial as u64);
    rng
}

/// Cell index reserved for auxiliary draws (probe directions, baselines)
/// that must not collide with per-trial streams.
pub const AUX_CELL: u32 = u32::MAX;
