//! Seed derivation. Every random stream in an experiment is split from one
//! root seed by a fixed label, so a single number reproduces everything.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` and a subsystem label.
pub fn derive(root: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix(root), |acc, b| splitmix(acc ^ u64::from(b)))
}

/// Derive a child seed from `root`, a label and an index (image number, resample number, ...).
pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    splitmix(derive(root, label) ^ splitmix(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
