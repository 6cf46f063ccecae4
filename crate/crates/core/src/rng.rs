//! Keyed random streams.
//!
//! Every parallel task derives its own generator from `(seed, key...)` so
//! results never depend on the order in which a thread pool runs the tasks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of keys into a single 64-bit stream id.
pub fn mix_keys(seed: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Generator for the stream identified by `(seed, keys)`.
pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    let mut s = [0u8; 32];
    let a = mix_keys(seed, keys);
    let b = splitmix64(a ^ 0xD6E8_FEB8_6659_FD93);
    let c = splitmix64(b);
    let d = splitmix64(c);
    for (i, w) in [a, b, c, d].iter().enumerate() {
        s[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(s)
}

/// Uniform in the open interval (0, 1), derived from a keyed hash without a
/// generator. Used for per-candidate Gumbel noise.
pub fn keyed_uniform(seed: u64, keys: &[u64]) -> f64 {
    let bits = mix_keys(seed, keys) >> 11;
    (bits as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard Gumbel variate keyed by `(seed, keys)`.
pub fn keyed_gumbel(seed: u64, keys: &[u64]) -> f64 {
    -(-keyed_uniform(seed, keys).ln()).ln()
}
