//! Seed-derived random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by the
//! user seed and placed on a stream id derived from a purpose tag and an
//! index path, so results do not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Child seed for `(seed, tag, path)`.
pub fn derive_seed(seed: u64, tag: &str, path: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ tag_hash(tag));
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

/// Generator for `(seed, tag, path)`.
pub fn stream(seed: u64, tag: &str, path: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(derive_seed(seed, tag, path));
    rng
}
