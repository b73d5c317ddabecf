//! Deterministic seed derivation for independent Monte Carlo streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based split: a distinct seed for every `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, index))
}

/// Stream labels so different consumers of one master seed never collide.
pub mod streams {
    pub const FILLER: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const FADING: u64 = 3;
    pub const TRIAL: u64 = 4;
    pub const CALIBRATION: u64 = 5;
    pub const AC_CALIBRATION: u64 = 6;
    pub const FA_CHECK: u64 = 7;
}
