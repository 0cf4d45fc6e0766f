//! Reproducible seeding: one master seed, one counter-based stream per path.
//!
//! Path `i` always sees the same increments no matter how many paths run or
//! in what order, so parallel experiments are bit-stable across worker
//! counts.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// RNG for path `path_index` of the experiment seeded with `master_seed`.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Draw `n` Gaussian increments with variance `dt`.
pub fn normal_increments(rng: &mut ChaCha12Rng, n: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * sd
        })
        .collect()
}
