//! Seeded random streams.
//!
//! A run has a single integer seed; each consumer (patch sampling, fold
//! assignment, holdout, synthetic imagery) draws from its own named
//! sub-stream so that re-seeding one component leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derive a 32-byte ChaCha key from `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Sub-stream indexed by an integer, e.g. one per synthetic image.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}
