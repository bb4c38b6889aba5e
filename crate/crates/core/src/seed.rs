//! Seed derivation.
//!
//! Per-sample seeds are built by chaining the SplitMix64 finalizer over the
//! coordinates of a sample:
//!
//! ```text
//! seed = mix(mix(mix(mix(master) ^ class) ^ snr_index) ^ sample_index)
//! ```
//!
//! The result depends only on those coordinates, never on generation order.

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_seed(master: u64, class: u32, snr_index: u32, sample_index: u32) -> u64 {
    let mut h = mix(master);
    h = mix(h ^ class as u64);
    h = mix(h ^ snr_index as u64);
    mix(h ^ sample_index as u64)
}

/// Derives an independent stream seed for a named purpose from a parent seed.
pub fn derive(parent: u64, tag: u64) -> u64 {
    mix(mix(parent) ^ tag)
}
