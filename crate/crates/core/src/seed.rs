//! Per-run seed derivation.
//!
//! Run `r` of an experiment with base seed `s` uses
//! `splitmix64(s + (r + 1) * 0x9E37_79B9_7F4A_7C15)` (wrapping arithmetic).
//! The mapping is part of the output format: changing it changes every
//! recorded curve.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run` derived from the experiment seed `base`.
pub fn derive_seed(base: u64, run: u64) -> u64 {
    splitmix64(base.wrapping_add(run.wrapping_add(1).wrapping_mul(GOLDEN)))
}
