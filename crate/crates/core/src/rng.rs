//! Deterministic per-sample random streams.
//!
//! Every random draw in an estimator comes from a stream keyed by
//! `(seed, stage, index)`, so the value produced for sample `index` never
//! depends on which worker thread computed it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags keep the streams of different estimator stages disjoint.
pub mod stage {
    pub const CONDITIONAL: u64 = 1;
    pub const AVERAGED_PHI: u64 = 2;
    pub const AVERAGED_DATA: u64 = 3;
    pub const MARGINAL: u64 = 4;
    pub const NUISANCE_INFO: u64 = 5;
    pub const INTEGRATOR: u64 = 6;
    pub const BAYES_THETA: u64 = 7;
    pub const BAYES_MARGINAL: u64 = 8;
    pub const APPROX: u64 = 9;
    pub const DATASET: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a child seed out of a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

pub fn stream(seed: u64, stage: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stage));
    rng.set_stream(index);
    rng
}
