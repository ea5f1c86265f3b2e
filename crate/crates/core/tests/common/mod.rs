#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line re-execution of the counter update rule over precomputed
/// hash values, with its own level/counter/label arithmetic.
pub struct OracleInstance {
    pub r: u64,
    pub u: u64,
    pub m: u64,
    /// `cells[w - 1][c] = (v, p)`; `p = None` means undefined.
    pub cells: Vec<Vec<(i64, Option<u64>)>>,
}

impl OracleInstance {
    pub fn new(r: u64, u: u64, m: u64) -> Self {
        OracleInstance { r, u, m, cells: vec![vec![(0, None); r as usize]; m as usize] }
    }

    pub fn address(&self, z: u64) -> (u64, u64, u64) {
        if z == 0 {
            return (self.m, 0, 0);
        }
        let mut zeros = 0;
        let mut probe = z;
        while probe & 1 == 0 {
            zeros += 1;
            probe /= 2;
        }
        let w = 1 + zeros;
        let x = if w >= 64 { 0 } else { z / (1u64 << w) };
        let c = (x / self.u) % self.r;
        let j = x % self.u;
        (w.min(self.m), c, j)
    }

    pub fn update(&mut self, z: u64) {
        let (w, c, j) = self.address(z);
        let cell = &mut self.cells[(w - 1) as usize][c as usize];
        let (v, p) = *cell;
        if v >= 0 {
            if v == 0 {
                *cell = (1, Some(j));
            } else if p != Some(j) {
                *cell = (-1, p);
            } else {
                *cell = (v + 1, p);
            }
        }
    }
}

/// A stream of item ids with repeats: `distinct` ids, multiplicities drawn 1..=max_mult.
pub fn random_stream(rng: &mut ChaCha8Rng, len: usize, distinct: u64) -> Vec<u64> {
    let ids: Vec<u64> = (0..distinct).map(|_| rng.gen()).collect();
    (0..len)
        .map(|_| {
            // Skew towards low ids so multiplicities spread out.
            let a = rng.gen_range(0..distinct);
            let b = rng.gen_range(0..distinct);
            ids[a.min(b) as usize]
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
