//! Reproducible random streams for parallel Monte Carlo.
//!
//! Every trajectory owns a ChaCha8 stream keyed by a sub-seed derived from
//! `(master seed, angle index, trajectory index)`. ChaCha is a counter-based
//! generator, so the value drawn at step `n` of a trajectory depends only on
//! its key and `n`, never on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |h, &k| {
        splitmix64(h ^ splitmix64(k.wrapping_add(GOLDEN.rotate_left(17))))
    })
}

/// Sub-seed of trajectory `traj` at angle index `angle`.
pub fn trajectory_seed(master: u64, angle: usize, traj: usize) -> u64 {
    derive_seed(master, &[angle as u64, traj as u64])
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
