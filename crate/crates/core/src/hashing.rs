//! Counter-based deterministic pseudo-randomness.
//!
//! Noise in the synthetic acoustic model must be a pure function of
//! (seed, utterance, frame, stream, token): the same frame is re-evaluated
//! on different code paths (streaming decode, dummy-frame batches, replay
//! tests) and must always produce bit-identical values. Sequential RNGs
//! would couple the draw to evaluation order, so we hash instead.

/// SplitMix64 finalizer. Public-domain constants (Steele et al.).
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one hash, order-sensitive.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x51_7C_C1_B7_27_22_0A_95u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// Stable hash of a string (FNV-1a), for seeding per-token values from text.
pub(crate) fn hash_str(s: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x1_0000_0000_01B3);
    }
    h
}

/// Uniform draw in [0, 1) from a hash.
pub(crate) fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform draw in [lo, hi) keyed by `parts`.
pub(crate) fn uniform(parts: &[u64], lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(mix(parts))
}
