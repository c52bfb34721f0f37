//! Counter-keyed random streams.
//!
//! Every random decision in the crate draws from a stream identified by a
//! base seed and a short tuple of integer keys (sample index, label index,
//! tree index, ...). Streams are independent of the order in which they are
//! created, so results do not depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes apart even when their
/// numeric keys coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Lsr = 1,
    Split = 2,
    Forest = 3,
    Boost = 4,
    Synthetic = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed, a domain tag and keys into a single 64-bit stream seed.
pub fn derive_seed(seed: u64, domain: Domain, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(domain as u64));
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(seed: u64, domain: Domain, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, keys))
}
