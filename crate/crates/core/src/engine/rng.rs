//! Per-stream seeded generators.
//!
//! Every workload stream owns a `Xoshiro256PlusPlus` seeded from
//! `SHA-256(master_seed_le || stream_name)`. Adding a stream never shifts the
//! draws of another one.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use sha2::{Digest, Sha256};

pub type StreamRng = Xoshiro256PlusPlus;

pub fn stream_rng(master_seed: u64, stream: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(stream.as_bytes());
    let seed: [u8; 32] = h.finalize().into();
    Xoshiro256PlusPlus::from_seed(seed)
}
