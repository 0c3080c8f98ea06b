//! Seed derivation.
//!
//! Every random decision in the pipeline draws from a ChaCha stream whose seed
//! is derived from a root seed plus a path of integer or string salts. The
//! derivation is stable across processes and platforms, which is what makes
//! transcripts replayable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `salts` into `seed`, order-sensitively.
pub fn derive(seed: u64, salts: &[u64]) -> u64 {
    salts
        .iter()
        .fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

/// Stable 64-bit digest of a string.
pub fn hash_str(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

pub fn derive_str(seed: u64, salt: &str) -> u64 {
    derive(seed, &[hash_str(salt)])
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derivation_is_order_sensitive() {
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
        assert_eq!(derive(1, &[2, 3]), derive(1, &[2, 3]));
    }

    #[test]
    fn frozen_values_do_not_drift() {
        // Transcripts persisted by earlier runs depend on these.
        assert_eq!(derive(0, &[]), 0xE220_A839_7B1D_CDAF);
        let mut r = rng(42);
        let first: u64 = r.gen();
        let mut again = rng(42);
        assert_eq!(first, again.gen::<u64>());
    }
}
