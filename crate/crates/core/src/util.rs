//! Small helpers shared across modules: stable seeding, rounding, content hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The random stream used everywhere a seeded draw is needed.
pub type SeededRng = ChaCha8Rng;

/// Builds a [`SeededRng`] from a plain integer seed.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed from a master seed and a list of coordinates.
///
/// The derivation hashes the coordinates, so adding new coordinates to an
/// experiment never changes the seeds of existing ones.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// `floor(x + 0.5)` with a small tolerance so that products such as `0.7 * 500`
/// land on the intended integer.
pub fn round_half_up(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x + 0.5 + 1e-9).floor() as usize
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// True when the string is empty or only whitespace.
pub fn is_blank(s: &str) -> bool {
    s.trim().is_empty()
}
