//! Keyed counter-based hashing and per-walker random streams.
//!
//! Environments never store their sites: the value at a site is a pure
//! function of `(seed, coordinates)` obtained from [`keyed_hash`]. Walkers
//! draw from a xoshiro256++ stream whose seed is itself a keyed hash of
//! `(master_seed, stream tag, walker index)`, so any walker can be replayed
//! in isolation.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Random stream used by every sampler in the crate.
pub type WalkRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain tags separating independent uses of the same seed.
pub mod tag {
    pub const SITE: u64 = 0x5349_5445;
    pub const MARKOV_ORIGIN: u64 = 0x4d4f_5249;
    pub const MARKOV_RIGHT: u64 = 0x4d52_4754;
    pub const MARKOV_LEFT: u64 = 0x4d4c_4654;
    pub const MARKOV_LEFT_SEED: u64 = 0x4d4c_5344;
    pub const WALKER_ENV: u64 = 0x5745_4e56;
    pub const WALKER_STEPS: u64 = 0x5753_5450;
    pub const RESAMPLE: u64 = 0x5253_4d50;
    pub const PERMUTE: u64 = 0x5045_524d;
}

/// SplitMix64 finalizer.
#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a sequence of 64-bit words under a key.
///
/// Signed coordinates are passed as their two's-complement `u64` image, so
/// every lattice point has a fixed-width encoding.
#[inline]
pub fn keyed_hash(key: u64, words: &[u64]) -> u64 {
    let mut h = mix64(key ^ GOLDEN);
    for (i, &w) in words.iter().enumerate() {
        let salt = GOLDEN.wrapping_mul(i as u64 + 1);
        h = mix64(h.wrapping_add(salt) ^ mix64(w ^ salt.rotate_left(17)));
    }
    mix64(h ^ (words.len() as u64).wrapping_mul(GOLDEN))
}

/// Maps a hash to a uniform double in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in `[0, 1)` drawn from a stream.
#[inline]
pub fn next_unit(rng: &mut WalkRng) -> f64 {
    use rand::RngCore;
    unit_f64(rng.next_u64())
}

/// A stream seeded by hashing `words` under `key`.
pub fn stream(key: u64, words: &[u64]) -> WalkRng {
    WalkRng::seed_from_u64(keyed_hash(key, words))
}

/// Environment and walk seeds of walker `index` under `master_seed`.
///
/// The pair depends only on `(master_seed, index)`, never on how many other
/// walkers exist or on scheduling.
pub fn split_walker(master_seed: u64, index: u64) -> (u64, u64) {
    (
        keyed_hash(master_seed, &[tag::WALKER_ENV, index]),
        keyed_hash(master_seed, &[tag::WALKER_STEPS, index]),
    )
}

/// Converts a probability into a threshold for comparison with a raw
/// `u64` draw: the draw is below the threshold with probability `p`
/// (up to 2^-64).
#[inline]
pub fn threshold(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else if p <= 0.0 {
        0
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_deterministic_and_key_sensitive() {
        let a = keyed_hash(7, &[1, 2, 3]);
        assert_eq!(a, keyed_hash(7, &[1, 2, 3]));
        assert_ne!(a, keyed_hash(8, &[1, 2, 3]));
        assert_ne!(a, keyed_hash(7, &[1, 3, 2]));
        assert_ne!(keyed_hash(7, &[1]), keyed_hash(7, &[1, 0]));
    }

    #[test]
    fn negative_coordinates_are_distinct() {
        let h: Vec<u64> = (-3i64..=3).map(|x| keyed_hash(1, &[x as u64])).collect();
        for i in 0..h.len() {
            for j in 0..i {
                assert_ne!(h[i], h[j]);
            }
        }
    }

    #[test]
    fn unit_values_are_roughly_uniform() {
        let n = 100_000;
        let mean: f64 = (0..n).map(|i| unit_f64(keyed_hash(3, &[i]))).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / n as f64).sqrt());
    }

    #[test]
    fn threshold_edges() {
        assert_eq!(threshold(0.0), 0);
        assert_eq!(threshold(1.0), u64::MAX);
        assert_eq!(threshold(0.5), 1u64 << 63);
    }
}
