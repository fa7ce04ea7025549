//! Child-seed derivation.
//!
//! Every stage draws from its own stream, keyed by a fixed label, so adding
//! or reordering stages never shifts another stage's random numbers.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream named `label` under the root `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(mix(h)))
}

/// Seed for the `index`-th member of a labelled family (e.g. one per day).
pub fn derive_indexed_seed(seed: u64, label: &str, index: u64) -> u64 {
    mix(derive_seed(seed, label) ^ mix(index.wrapping_add(1)))
}
