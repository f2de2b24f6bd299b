//! Seed derivation for per-call RNG streams.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of keys into one seed. Order matters.
pub(crate) fn derive(global: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix(global), |acc, &k| mix(acc ^ mix(k)))
}
