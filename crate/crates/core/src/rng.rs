//! Named random substreams derived from a single root seed.
//!
//! Every stochastic component (holdout split, initialisation, bootstrap
//! resampling, mini-batch shuffling, synthetic data) draws from its own
//! ChaCha stream so that adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const BOOTSTRAP: &str = "bootstrap";
pub const SHUFFLE: &str = "shuffle";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the substream `name` under `root`. Stable across platforms.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    // FNV-1a over the name bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ splitmix64(h))
}

pub fn substream(root: u64, name: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, name))
}
