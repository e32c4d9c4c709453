//! Deterministic seed derivation for independent random streams.

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `base`. Distinct streams of one base, and
/// equal streams of distinct bases, give unrelated seeds.
#[inline]
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix64(mix64(base) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Named stream tags so that, for one run seed, different consumers never share a stream.
pub mod stream {
    pub const INITIAL_POOL: u64 = 0x1000;
    pub const TRAINING: u64 = 0x2000;
    pub const RANDOM_SCORES: u64 = 0x3000;
    pub const CASE: u64 = 0x4000;
}
