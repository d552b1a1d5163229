//! Seed handling. Every random draw in the crate goes through a ChaCha8
//! stream keyed by a `u64`; sub-tasks get child seeds so that the result of a
//! sweep does not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent seed for sub-stream `index` of `master` (splitmix64).
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed sub-stream indices used by the experiment drivers.
pub mod stream {
    pub const GRAPH: u64 = 0;
    pub const WALKS: u64 = 1;
    pub const INIT: u64 = 2;
    pub const CLUSTER: u64 = 3;
}
