//! Seed discipline: every random stream is keyed by `(master seed, tag, index)`.
//!
//! Streams are independent of how many other streams are drawn, so growing a
//! trial count never perturbs earlier trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub fn derive_seed(master_seed: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    seed
}

/// Short numeric label for a derived stream, used in CSV outputs.
pub fn stream_id(master_seed: u64, tag: &str, index: u64) -> u64 {
    let seed = derive_seed(master_seed, tag, index);
    u64::from_le_bytes(seed[..8].try_into().expect("8 bytes"))
}

pub fn stream(master_seed: u64, tag: &str, index: u64) -> SimRng {
    SimRng::from_seed(derive_seed(master_seed, tag, index))
}
