//! Seeded randomness.
//!
//! All randomness comes from ChaCha8, a counter-based generator with a 64-bit
//! stream id. A master seed selects the key; each Monte Carlo trial gets its
//! own stream derived from `(n, m, trial)`, so trials can run in any order or
//! in parallel and still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for one `(n, m, trial)` cell under `master`.
pub fn trial_rng(master: u64, n: usize, m: usize, trial: usize) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(n as u64, m as u64, trial as u64));
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_id(n: u64, m: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(n) ^ m) ^ trial)
}
