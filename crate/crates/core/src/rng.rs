//! Deterministic random streams.
//!
//! Every stochastic component draws from a `ChaCha8Rng` whose seed is derived
//! from a 64-bit master seed and a key tuple. The derivation folds the key
//! into the master seed with the SplitMix64 finalizer, so streams for
//! different keys are independent for practical purposes and do not depend on
//! the order in which work is scheduled.
//!
//! Key tuples used in this crate:
//!
//! | stream                         | key                                   |
//! |--------------------------------|---------------------------------------|
//! | repetition `r` of experiment   | `(REPETITION, r)`                     |
//! | training data, environment `e` | `(TRAIN, e)`                          |
//! | test data, environment `e`     | `(TEST, e)`                           |
//! | GP function, environment `e`   | `(GP_FUNCTION, e)`                    |
//! | Beta shift parameters          | `(BETA_PARAMS, e)`                    |
//! | tree `b` of a forest           | `(TREE, b)`                           |
//! | per-environment forest `k`     | `(ENV_FOREST, k)`                     |
//! | holdout split                  | `(HOLDOUT,)`                          |
//! | regret reference tree for `e`  | `(REGRET_TREE, e)`                    |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod tags {
    pub const REPETITION: u64 = 0x5245_5045;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const TEST: u64 = 0x5445_5354;
    pub const GP_FUNCTION: u64 = 0x4750_4655;
    pub const BETA_PARAMS: u64 = 0x4245_5441;
    pub const TREE: u64 = 0x5452_4545;
    pub const ENV_FOREST: u64 = 0x454e_5646;
    pub const HOLDOUT: u64 = 0x484f_4c44;
    pub const REGRET_TREE: u64 = 0x5245_4754;
    pub const METHOD: u64 = 0x4d45_5448;
    pub const EVAL: u64 = 0x4556_414c;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const MIXTURE: u64 = 0x4d49_5854;
    pub const PERMUTATION: u64 = 0x5045_524d;
    pub const SHARED_X: u64 = 0x5348_5258;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a key tuple.
pub fn derive_seed(master: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A random stream for `(master, key)`.
pub fn stream(master: u64, key: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, key))
}
