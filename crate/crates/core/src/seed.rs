//! Seed plumbing shared by every randomized operation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere a seeded draw is needed.
pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a per-item seed from a run seed and a stable key (FNV-1a over the key).
pub fn derive(seed: u64, key: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &byte in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= u64::from(byte);
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_key_sensitive() {
        assert_eq!(derive(42, "s001"), derive(42, "s001"));
        assert_ne!(derive(42, "s001"), derive(42, "s002"));
        assert_ne!(derive(42, "s001"), derive(43, "s001"));
    }
}
