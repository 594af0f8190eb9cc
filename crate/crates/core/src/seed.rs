//! Stable hashing and named random sub-streams.
//!
//! Every random decision in the pipeline derives from one root seed through
//! a named stream (`"pv"`, `"split"`, `"shuffle"`, `"init"`, `"sample"`), so
//! components stay reproducible independently of each other. Hashes here are
//! fixed algorithms (FNV-1a + splitmix64) and never depend on the toolchain.

use rand::SeedableRng;
use sha2::{Digest, Sha256};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Keyed hash of a string: stable across runs, platforms and compilers.
pub fn keyed_hash(key: u64, s: &str) -> u64 {
    splitmix64(key ^ splitmix64(fnv1a(s.as_bytes())))
}

/// Maps a hash to a uniform real in `[0, 1)`.
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Root seed with named sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Seeds {
    pub root: u64,
}

impl Seeds {
    pub fn new(root: u64) -> Self {
        Seeds { root }
    }

    pub fn stream(&self, name: &str) -> u64 {
        keyed_hash(self.root, name)
    }

    pub fn rng(&self, name: &str) -> Rng {
        Rng::seed_from_u64(self.stream(name))
    }
}

/// RNG for one item (document, instance, ...) within a named stream.
pub fn item_rng(stream_seed: u64, item: &str) -> Rng {
    Rng::seed_from_u64(keyed_hash(stream_seed, item))
}

/// Hex-encoded SHA-256, used for fingerprints in provenance records.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
