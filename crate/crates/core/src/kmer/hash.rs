use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{Kmer, MAX_K};

const MAX_WORDS: usize = MAX_K.div_ceil(32);

/// 64-bit avalanche finalizer (splitmix64 / Stafford variant 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded hash of a packed item: XXH3-64 over the little-endian words.
#[inline]
pub fn hash_words(words: &[u64], seed: u64) -> u64 {
    if let [w] = words {
        return xxh3_64_with_seed(&w.to_le_bytes(), seed);
    }
    let mut buf = [0u8; 8 * MAX_WORDS];
    for (chunk, w) in buf.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    xxh3_64_with_seed(&buf[..8 * words.len()], seed)
}

pub fn hash_kmer(kmer: &Kmer, seed: u64) -> u64 {
    hash_words(kmer.words(), seed)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn deterministic() {
        let km = Kmer::from_bases(b"ACGTTGCA").unwrap();
        for seed in [0, 1, u64::MAX] {
            assert_eq!(hash_kmer(&km, seed), hash_kmer(&km, seed));
        }
        assert_ne!(hash_kmer(&km, 1), hash_kmer(&km, 2));
    }

    #[test]
    fn avalanche() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mut total = 0u64;
        for _ in 0..trials {
            let x: u64 = rng.gen::<u64>() >> 2;
            let bit = rng.gen_range(0..62);
            let seed = rng.gen();
            total += (hash_words(&[x], seed) ^ hash_words(&[x ^ (1 << bit)], seed)).count_ones()
                as u64;
        }
        let mean = total as f64 / trials as f64;
        assert!((28.0..=36.0).contains(&mean), "mean flipped bits {mean}");
    }

    #[test]
    fn trailing_zero_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000u64;
        let mut at_least = [0u64; 11];
        for _ in 0..n {
            let km: u64 = rng.gen::<u64>() & ((1 << 42) - 1);
            let tz = hash_words(&[km], 99).trailing_zeros().min(10) as usize;
            for c in at_least.iter_mut().take(tz + 1) {
                *c += 1;
            }
        }
        for (j, &c) in at_least.iter().enumerate() {
            let p = 0.5f64.powi(j as i32);
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let diff = (c as f64 - n as f64 * p).abs();
            assert!(diff <= 3.0 * sigma.max(1.0), "j={j}: {c} vs {}", n as f64 * p);
        }
    }
}
