//! Stable hashing helpers shared by the mock backends, seeding, and run manifests.
//!
//! Everything here must produce identical values across processes, platforms
//! and compiler versions, so `std::hash` is deliberately not used.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First eight bytes of SHA-256 over the concatenated parts, each prefixed by its
/// length so that `("ab", "c")` and `("a", "bc")` differ.
pub fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Sub-seed for a pipeline stage derived from the run seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    stable_hash64(&[&seed.to_le_bytes(), stage.as_bytes()])
}

/// 64-bit FNV-1a. Used in hot loops (character n-gram hashing) where SHA-256
/// would dominate the runtime.
pub fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_separates_parts() {
        assert_ne!(stable_hash64(&[b"ab", b"c"]), stable_hash64(&[b"a", b"bc"]));
    }

    #[test]
    fn stage_seeds_differ_by_stage() {
        assert_ne!(stage_seed(7, "synth"), stage_seed(7, "train"));
        assert_eq!(stage_seed(7, "synth"), stage_seed(7, "synth"));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
