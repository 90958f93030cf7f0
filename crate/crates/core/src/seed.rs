//! Child-seed derivation.
//!
//! Every random stream in a run is seeded by `derive(master, tag, index)`:
//! the tag is folded with FNV-1a, then master, tag hash and index are mixed
//! through SplitMix64 finalizers. Streams are independent of call order, so
//! adding logging or reordering rollouts never perturbs randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Derives a child seed from a parent seed, a purpose tag and an index.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let h = splitmix64(master ^ fnv1a(tag));
    splitmix64(h ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Two-level derivation, used for (group, trajectory) style indices.
pub fn derive2(master: u64, tag: &str, outer: u64, inner: u64) -> u64 {
    derive(derive(master, tag, outer), tag, inner)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
