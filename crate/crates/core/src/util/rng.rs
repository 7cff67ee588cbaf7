//! Deterministic seed derivation.
//!
//! Every random quantity in the library flows from a single `u64` seed
//! through named substreams, so that reruns with the same seed are
//! bit-identical regardless of thread count or evaluation order:
//!
//! ```text
//! substream(seed, name)        = splitmix64(seed ^ fnv1a64(name))
//! substream_indexed(.., i)     = splitmix64(substream(seed, name) ^ i)
//! ```
//!
//! Substream seeds feed a ChaCha8 generator, which is portable and fast.

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// splitmix64 finalizer; bijective on u64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for the named substream of `seed`.
pub fn substream(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(name.as_bytes()))
}

/// Seed for the `i`-th member of the named substream (trials, retries, ...).
pub fn substream_indexed(seed: u64, name: &str, i: u64) -> u64 {
    splitmix64(substream(seed, name) ^ i)
}

/// Generator seeded from a derived substream seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// i.i.d. standard normal draws.
pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform draw on the unit sphere of `R^n` via normalized Gaussians.
/// Redraws in the (measure-zero) event of a near-zero vector.
pub fn unit_sphere_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}
