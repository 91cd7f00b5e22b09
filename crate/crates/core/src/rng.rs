//! Seeding discipline.
//!
//! All randomness flows through [`Xoshiro256PlusPlus`] seeded with
//! `seed_from_u64`, which expands the 64-bit seed with SplitMix64. Independent
//! streams (bootstrap repeats, trees, per-feature RANSAC runs) get their own
//! seed from [`derive_seed`], so results do not depend on evaluation order or
//! thread scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SamRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> SamRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a stream index into a base seed: `splitmix64(seed ^ splitmix64(stream))`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Stable 64-bit stream id for a textual label (FNV-1a).
pub fn stream_id(label: &str) -> u64 {
    fnv1a(FNV_OFFSET, label.as_bytes())
}

/// FNV-1a over the little-endian bit patterns of a row. `-0.0` is folded onto
/// `0.0` so that equal values always share a fingerprint.
pub fn fingerprint_row(row: &[f64]) -> u64 {
    row.iter().fold(FNV_OFFSET, |h, &v| {
        let v = if v == 0.0 { 0.0 } else { v };
        fnv1a(h, &v.to_bits().to_le_bytes())
    })
}
