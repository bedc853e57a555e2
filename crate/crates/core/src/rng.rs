//! Deterministic seed derivation for parallel work.
//!
//! Every parallel unit (tree, fold, plan, instance stream) gets its own RNG
//! seeded from `(base, index)` so results never depend on scheduling order.

/// Derives a child seed from a base seed and a stream index.
///
/// SplitMix64 finalizer over the combined words; the same `(base, index)`
/// pair yields the same seed on every platform.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
