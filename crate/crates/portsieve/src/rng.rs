//! Named-stream random number splitting.
//!
//! Every random draw in the engine flows from one master seed through a
//! named stream, `stream_rng(seed, "module/purpose")`. Stream seeds are
//! SHA-256 digests of the master seed and the stream name, so adding a new
//! consumer (a new agent, another estimator) never perturbs the draws seen
//! by existing ones, and any stream can be reproduced in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Deterministic RNG for the stream `name` derived from `master_seed`.
pub fn stream_rng(master_seed: u64, name: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(name.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha12Rng::from_seed(digest)
}



/// A u64 sub-seed for the stream `name`.
pub fn derive_seed(master_seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    stream_rng(master_seed, name).next_u64()
}

/// One standard-normal draw.
pub fn normal(rng: &mut impl rand::Rng) -> f64 {
    use rand_distr::Distribution;
    let x: f64 = rand_distr::StandardNormal.sample(rng);
    x
}
