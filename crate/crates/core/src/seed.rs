//! Seed-stream derivation.
//!
//! Every random stream in a run is derived from one root seed, a component name
//! and a list of indices (epoch, batch, row, ...). Streams therefore do not depend
//! on scheduling order, which is what makes parallel sampling reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from `(root, component, indices)`.
pub fn derive_seed(root: u64, component: &str, indices: &[u64]) -> u64 {
    // FNV-1a over the component name
    let mut name_hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in component.bytes() {
        name_hash ^= u64::from(byte);
        name_hash = name_hash.wrapping_mul(0x0100_0000_01b3);
    }
    let mut h = splitmix64(root ^ splitmix64(name_hash));
    for &idx in indices {
        h = splitmix64(h ^ splitmix64(idx.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// A ChaCha8 generator for the derived stream.
pub fn stream(root: u64, component: &str, indices: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, component, indices))
}
