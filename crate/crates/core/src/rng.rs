//! Deterministic named-stream RNG splitting.
//!
//! All randomness in a run flows from one 64-bit seed. Each component draws
//! from its own stream (`sampler`, `init`, `augment`, `selection`, ...), keyed
//! by name and an index vector, so reseeding one component never perturbs the
//! others and per-trial work is independent of scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Stream names used across the engine. Free-form names are allowed; these
/// constants keep call sites consistent.
pub mod stream {
    pub const SAMPLER: &str = "sampler";
    pub const INIT: &str = "init";
    pub const AUGMENT: &str = "augment";
    pub const SELECTION: &str = "selection";
    pub const DATAGEN: &str = "datagen";
    pub const TRIAL: &str = "trial";
}

/// Derives a reproducible RNG for `(seed, name, indices)`.
///
/// The derivation hashes the inputs, so streams are statistically independent
/// and stable across platforms and releases of this crate.
pub fn stream_rng(seed: u64, name: &str, indices: &[u64]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([name.len() as u8]);
    hasher.update(name.as_bytes());
    for ix in indices {
        hasher.update(ix.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream_rng(7, stream::SAMPLER, &[0]);
        let mut b = stream_rng(7, stream::SAMPLER, &[0]);
        let av: u64 = a.gen();
        assert_eq!(av, b.gen::<u64>());

        let mut c = stream_rng(7, stream::INIT, &[0]);
        let mut d = stream_rng(7, stream::SAMPLER, &[1]);
        // Different name or index must not replay the same sequence.
        assert_ne!(av, c.gen::<u64>());
        assert_ne!(av, d.gen::<u64>());
    }
}
