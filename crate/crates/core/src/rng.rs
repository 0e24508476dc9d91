//! Counter-based random number generation.
//!
//! Every draw is a pure function of a seed and a stream key (path, node,
//! coordinate, ...), so ensembles are identical across runs, thread counts
//! and schedules. The generator is a SplitMix64-style finalizer applied to
//! the mixed key; it is not cryptographic.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_B: u64 = 0xC2B2_AE3D_27D4_EB4F;
const MIX_C: u64 = 0x1656_67B1_9E37_79F9;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 pseudo-random bits keyed by (seed, a, b, c).
#[inline]
pub fn keyed_u64(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix(seed ^ GOLDEN);
    h = splitmix(h ^ a.wrapping_mul(GOLDEN).wrapping_add(1));
    h = splitmix(h ^ b.wrapping_mul(MIX_B).wrapping_add(2));
    h = splitmix(h ^ c.wrapping_mul(MIX_C).wrapping_add(3));
    h
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn keyed_uniform(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let bits = keyed_u64(seed, a, b, c) >> 11;
    (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal draw via Box-Muller on two keyed uniforms.
#[inline]
pub fn keyed_normal(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let u1 = keyed_uniform(seed, a, b, c.wrapping_mul(2));
    let u2 = keyed_uniform(seed, a, b, c.wrapping_mul(2).wrapping_add(1));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
