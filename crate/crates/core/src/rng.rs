//! Deterministic random substreams.
//!
//! Every random decision in a run flows from one master seed. Independent
//! workers (niches, views, replicates) get their own ChaCha stream derived
//! from the master seed and a tag path, so results never depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// RNG seeded from a master seed and a tag path.
pub fn substream(master: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tags))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stable tags for the places randomness is drawn from.
pub mod tag {
    pub const FOLDS: u64 = 1;
    pub const IVFS: u64 = 2;
    pub const BVFS: u64 = 3;
    pub const STRUCTURE: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const TEST: u64 = 6;
    pub const NOISE: u64 = 7;
}
