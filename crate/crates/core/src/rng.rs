//! Seeded random number generation.
//!
//! All randomness flows through `ChaCha12Rng` instances derived from a
//! global `u64` seed plus a stream label. Per-record generators are
//! derived by hashing the record id into the stream, so reordering a
//! dataset never changes the random draws any individual record sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike the
/// standard library's default hasher.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer, used to decorrelate seed material.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mix a global seed with an arbitrary label into a single stream seed.
pub fn stream_seed(global_seed: u64, label: &str) -> u64 {
    splitmix64(global_seed ^ fnv1a64(label.as_bytes()))
}

/// Generator for a named stream under a global seed.
pub fn stream_rng(global_seed: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_seed(global_seed, label))
}

/// Generator for one record. Depends only on `(global_seed, id)`, so the
/// draws a record sees are independent of dataset order.
pub fn record_rng(global_seed: u64, id: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(global_seed ^ fnv1a64(id.as_bytes())))
}

/// Generator for one record within one epoch. Order-independent like
/// [`record_rng`], but draws differ across epochs.
pub fn epoch_record_rng(global_seed: u64, epoch: u64, id: &str) -> ChaCha12Rng {
    let mixed = splitmix64(global_seed ^ splitmix64(epoch)) ^ fnv1a64(id.as_bytes());
    ChaCha12Rng::seed_from_u64(splitmix64(mixed))
}
