//! End-to-end pipelines and their diagnostics.

pub mod cessi;
pub mod diagnostics;
pub mod output;
pub mod rb;

/// Seed of the named stream `name`, member `index`, derived from `base`.
/// Streams with different names or indices are independent for practical
/// purposes; the derivation is FNV-1a followed by a SplitMix64 finalizer.
pub fn stream_seed(base: u64, name: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in base.to_le_bytes().iter().chain(name.as_bytes()).chain(&index.to_le_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}
