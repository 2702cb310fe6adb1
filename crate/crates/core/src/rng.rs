//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a root seed plus a short path
//! of integers (module tag, item index, step index, ...). The stream for an
//! item never depends on how many other items were drawn before it, so work
//! can be split across threads without changing any result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct constants keep independent uses of one root seed
/// from colliding.
pub mod tag {
    pub const DATA: u64 = 0x6461_7461;
    pub const PROFILE: u64 = 0x7072_6f66;
    pub const HISTOGRAM: u64 = 0x6869_7374;
    pub const PERTURB: u64 = 0x7065_7274;
    pub const SAMPLE_INIT: u64 = 0x696e_6974;
    pub const SAMPLE_STEP: u64 = 0x7374_6570;
    pub const PROPAGATE: u64 = 0x7072_6f70;
    pub const PROJECTION: u64 = 0x7072_6f6a;
    pub const MLP_INIT: u64 = 0x6d6c_7069;
    pub const MLP_BATCH: u64 = 0x6d6c_7062;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed with a path of counters into a new 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A ChaCha8 generator keyed by `(root, path)`.
pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}
