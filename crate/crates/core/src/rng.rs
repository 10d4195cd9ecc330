//! Counter-based random streams.
//!
//! Label `j` of a stream is the `j`-th 64-bit word of a ChaCha8 keystream, read
//! by seeking, so any coordinate can be produced without generating the ones
//! before it and parallel chunking never changes the values.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CHUNK: usize = 4096;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed number `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// A seeded ChaCha8 generator for sequential use.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 53-bit uniform in `[0, 1)`.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Words `0..n` of the keystream for `seed`, mapped to `[0, 1)`.
pub fn uniforms(seed: u64, n: usize) -> Vec<f64> {
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n];
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = base.clone();
            // one u64 consumes two 32-bit words
            rng.set_word_pos(2 * (c * CHUNK) as u128);
            for v in chunk.iter_mut() {
                *v = unit_f64(rng.next_u64());
            }
        });
    out
}

/// Sequential variant of [`uniforms`] for use inside an outer parallel loop.
pub fn uniforms_seq(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| unit_f64(rng.next_u64())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_does_not_change_values() {
        let n = 3 * CHUNK + 17;
        let a = uniforms(42, n);
        let b = uniforms_seq(42, n);
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        rng.set_word_pos(2 * (CHUNK as u128 + 5));
        assert_eq!(unit_f64(rng.next_u64()), a[CHUNK + 5]);
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
