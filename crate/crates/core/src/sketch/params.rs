use serde::{Deserialize, Serialize};

use super::SketchError;

pub const DEFAULT_INSTANCES: usize = 7;
pub const DEFAULT_LOG2_COUNTERS: u32 = 16;
pub const DEFAULT_AUX_UNIVERSE: u32 = 1 << 16;
pub const DEFAULT_LEVELS: u32 = 64;

/// Largest supported counter exponent; `2^30` cells per level is already 6 GiB per instance.
pub const MAX_LOG2_COUNTERS: u32 = 30;
pub const MIN_AUX_UNIVERSE: u32 = 8;
/// Labels are stored in 16 bits.
pub const MAX_AUX_UNIVERSE: u32 = 1 << 16;
pub const MAX_LEVELS: u32 = 64;

/// Parameter block shared by every instance of a sketch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchParams {
    /// Counters per level as a power of two (`r = 2^log2_counters`).
    pub log2_counters: u32,
    /// Size of the auxiliary label universe `u`.
    pub aux_universe: u32,
    /// Number of sampling levels `M`.
    pub levels: u32,
    /// One hash seed per instance; the instance count `t` is `seeds.len()`.
    pub seeds: Vec<u64>,
}

impl SketchParams {
    /// Parameters with the default `u` and `M`, seeds expanded from `master_seed`.
    pub fn new(instances: usize, log2_counters: u32, master_seed: u64) -> Self {
        SketchParams {
            log2_counters,
            aux_universe: DEFAULT_AUX_UNIVERSE,
            levels: DEFAULT_LEVELS,
            seeds: expand_seeds(master_seed, instances),
        }
    }

    pub fn with_aux_universe(mut self, u: u32) -> Self {
        self.aux_universe = u;
        self
    }

    pub fn with_levels(mut self, m: u32) -> Self {
        self.levels = m;
        self
    }

    pub fn instances(&self) -> usize {
        self.seeds.len()
    }

    pub fn counters(&self) -> usize {
        1usize << self.log2_counters
    }

    pub fn validate(&self) -> Result<(), SketchError> {
        let bad = |msg: String| Err(SketchError::Config(msg));
        let t = self.seeds.len();
        if t == 0 || t % 2 == 0 {
            return bad(format!("instance count must be odd and positive, got {t}"));
        }
        if t > u16::MAX as usize {
            return bad(format!("instance count {t} exceeds {}", u16::MAX));
        }
        if !(1..=MAX_LOG2_COUNTERS).contains(&self.log2_counters) {
            return bad(format!(
                "log2 counters must be in 1..={MAX_LOG2_COUNTERS}, got {}",
                self.log2_counters
            ));
        }
        if !(MIN_AUX_UNIVERSE..=MAX_AUX_UNIVERSE).contains(&self.aux_universe) {
            return bad(format!(
                "auxiliary universe must be in {MIN_AUX_UNIVERSE}..={MAX_AUX_UNIVERSE}, got {}",
                self.aux_universe
            ));
        }
        if !(1..=MAX_LEVELS).contains(&self.levels) {
            return bad(format!("level count must be in 1..={MAX_LEVELS}, got {}", self.levels));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("instance seeds must be pairwise distinct".into());
        }
        Ok(())
    }

    /// Bytes needed if every level of every instance were allocated.
    pub fn max_footprint_bytes(&self) -> u64 {
        self.instances() as u64 * self.levels as u64 * self.counters() as u64 * super::CELL_BYTES
    }
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams::new(DEFAULT_INSTANCES, DEFAULT_LOG2_COUNTERS, 0)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministically expand a master seed into `count` distinct instance seeds.
pub fn expand_seeds(master_seed: u64, count: usize) -> Vec<u64> {
    let mut state = master_seed;
    let mut seeds: Vec<u64> = Vec::with_capacity(count);
    while seeds.len() < count {
        let s = splitmix64(&mut state);
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    seeds
}
