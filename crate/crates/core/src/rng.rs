//! Seed and stream derivation.
//!
//! Every random quantity is drawn from a ChaCha stream addressed by
//! `(seed, stream_id)`. Run `r` of an ensemble uses `derive_seed(master, r)`
//! and each agent walks on its own stream, so two experiments that share a
//! run index see the same belief noise (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser over `master ^ golden·(index+1)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
