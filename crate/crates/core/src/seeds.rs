//! Sub-seed derivation.
//!
//! Every randomized routine takes a `u64` seed. Independent streams (one per
//! trial, restart or generator role) are derived by folding the indices into
//! the seed with SplitMix64, so parallel execution order never changes a
//! stream.

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `(index, role)` under `seed`.
pub fn sub_seed(seed: u64, index: u64, role: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ index) ^ role.wrapping_mul(0x2545_f491_4f6c_dd1d))
}
