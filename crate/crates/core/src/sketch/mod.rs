//! The abundance sketch: multi-level sampled counter arrays with collision
//! detection through auxiliary labels, combined over independent instances.
//!
//! Every input item is hashed once per instance. The hash picks a sampling
//! level `w` (one plus its trailing-zero count, so level `w` sees roughly a
//! `2^-w` fraction of distinct items), a counter `c` within that level and an
//! auxiliary label `j`. A counter remembers the label of the first item it
//! saw; an item arriving with a different label marks the counter dirty and
//! it is ignored from then on. Non-dirty counters therefore hold the exact
//! multiplicity of the single item that reached them, except for the rare
//! undetected collisions where two items share both `c` and `j`.

mod estimate;
mod format;
mod params;

pub use estimate::{estimate_f0, estimate_fi, estimate_histogram, median, LevelCensus};
pub use format::{FORMAT_VERSION, MAGIC};
pub use params::{
    expand_seeds, SketchParams, DEFAULT_AUX_UNIVERSE, DEFAULT_INSTANCES, DEFAULT_LEVELS,
    DEFAULT_LOG2_COUNTERS, MAX_AUX_UNIVERSE, MAX_LEVELS, MAX_LOG2_COUNTERS, MIN_AUX_UNIVERSE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kmer::hash_words;

/// Counter value marking a cell in which a collision was detected.
pub const DIRTY: i32 = -1;
/// Saturation cap for counter values.
pub const V_MAX: i32 = i32::MAX - 1;
/// Serialized size of one cell: `i32` value plus `u16` label.
pub const CELL_BYTES: u64 = 6;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("invalid sketch configuration: {0}")]
    Config(String),
    #[error("cannot merge sketches: {0}")]
    Merge(String),
    #[error("sketch saturated: no instance has a level with empty counters")]
    Saturated,
    #[error("multiplicity {0} exceeds the counter saturation cap")]
    UnsupportedMultiplicity(u64),
    #[error("expected {expected} hash values (one per instance), got {got}")]
    HashCount { expected: usize, got: usize },
    #[error("sketch file: unsupported format version {0}")]
    Version(u16),
    #[error("sketch file: bad magic bytes")]
    Magic,
    #[error("sketch file truncated: {0}")]
    Truncated(String),
    #[error("sketch file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("sketch file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One counter: value `v` (or [`DIRTY`]) and the label `p` of the item that owns it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterCell {
    pub v: i32,
    /// `None` while the cell is empty.
    pub p: Option<u16>,
}

impl CounterCell {
    pub const EMPTY: CounterCell = CounterCell { v: 0, p: None };

    pub fn is_dirty(&self) -> bool {
        self.v == DIRTY
    }

    /// Apply one occurrence of an item with label `j`.
    pub fn apply(self, j: u16) -> CounterCell {
        match self.v {
            DIRTY => self,
            0 => CounterCell { v: 1, p: Some(j) },
            v if self.p == Some(j) => CounterCell { v: saturating_add(v, 1), p: self.p },
            _ => CounterCell { v: DIRTY, p: self.p },
        }
    }

    /// Combine two cells built from disjoint parts of one stream.
    pub fn combine(self, other: CounterCell) -> CounterCell {
        if self.v == DIRTY || other.v == DIRTY {
            return CounterCell { v: DIRTY, p: self.p.or(other.p) };
        }
        if self.v == 0 {
            return other;
        }
        if other.v == 0 {
            return self;
        }
        if self.p == other.p {
            CounterCell { v: saturating_add(self.v, other.v), p: self.p }
        } else {
            CounterCell { v: DIRTY, p: self.p }
        }
    }
}

fn saturating_add(a: i32, b: i32) -> i32 {
    a.saturating_add(b).min(V_MAX)
}

/// Where a hash value lands: level `w` (1-based), counter `c`, label `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LevelAddress {
    pub w: u32,
    pub c: usize,
    pub j: u16,
}

/// Map a hash value to its level, counter and auxiliary label.
///
/// `w = 1 + trailing_zeros(z)` (clamped to `M`; `z = 0` goes to level `M`),
/// `x = z >> w`, `c = floor(x / u) mod r`, `j = x mod u`.
pub fn locate(z: u64, params: &SketchParams) -> LevelAddress {
    Locator::new(params).locate(z)
}

/// [`locate`] with the divisors precomputed.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Locator {
    levels: u32,
    counter_mask: u64,
    aux: u64,
    aux_shift: Option<u32>,
}

impl Locator {
    pub(crate) fn new(params: &SketchParams) -> Self {
        let aux = params.aux_universe as u64;
        Locator {
            levels: params.levels,
            counter_mask: (1u64 << params.log2_counters) - 1,
            aux,
            aux_shift: aux.is_power_of_two().then(|| aux.trailing_zeros()),
        }
    }

    #[inline]
    pub(crate) fn locate(&self, z: u64) -> LevelAddress {
        if z == 0 {
            return LevelAddress { w: self.levels, c: 0, j: 0 };
        }
        let w = z.trailing_zeros() + 1;
        let x = z.checked_shr(w).unwrap_or(0);
        let (q, j) = match self.aux_shift {
            Some(s) => (x >> s, x & (self.aux - 1)),
            None => (x / self.aux, x % self.aux),
        };
        LevelAddress { w: w.min(self.levels), c: (q & self.counter_mask) as usize, j: j as u16 }
    }
}

/// One level array, allocated on first touch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Level {
    pub(crate) values: Box<[i32]>,
    pub(crate) labels: Box<[u16]>,
}

impl Level {
    fn new(r: usize) -> Self {
        Level { values: vec![0; r].into_boxed_slice(), labels: vec![0; r].into_boxed_slice() }
    }

    #[inline]
    fn cell(&self, c: usize) -> CounterCell {
        let v = self.values[c];
        CounterCell { v, p: (v != 0).then_some(self.labels[c]) }
    }

    #[inline]
    fn set(&mut self, c: usize, cell: CounterCell) {
        self.values[c] = cell.v;
        self.labels[c] = cell.p.unwrap_or(0);
    }

    #[inline]
    fn apply(&mut self, c: usize, j: u16) {
        let v = self.values[c];
        if v == DIRTY {
            return;
        }
        if v == 0 {
            self.values[c] = 1;
            self.labels[c] = j;
        } else if self.labels[c] == j {
            self.values[c] = saturating_add(v, 1);
        } else {
            self.values[c] = DIRTY;
        }
    }
}

/// One seeded copy of the structure: `M` level arrays of `r` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchInstance {
    seed: u64,
    counters: usize,
    levels: Vec<Option<Level>>,
}

impl SketchInstance {
    fn new(seed: u64, counters: usize, levels: u32) -> Self {
        SketchInstance { seed, counters, levels: vec![None; levels as usize] }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level_count(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Whether level `w` (1-based) has been touched.
    pub fn is_allocated(&self, w: u32) -> bool {
        self.levels[w as usize - 1].is_some()
    }

    pub fn allocated_levels(&self) -> usize {
        self.levels.iter().filter(|l| l.is_some()).count()
    }

    /// Cell `c` at level `w` (1-based).
    pub fn cell(&self, w: u32, c: usize) -> CounterCell {
        match &self.levels[w as usize - 1] {
            Some(level) => level.cell(c),
            None => CounterCell::EMPTY,
        }
    }

    /// Counter values at level `w`; `None` if the level was never touched (all zero).
    pub fn level_values(&self, w: u32) -> Option<&[i32]> {
        self.levels[w as usize - 1].as_ref().map(|l| &l.values[..])
    }

    #[inline]
    fn apply(&mut self, addr: LevelAddress) {
        let r = self.counters;
        self.levels[addr.w as usize - 1].get_or_insert_with(|| Level::new(r)).apply(addr.c, addr.j);
    }

    fn merge_from(&mut self, other: &SketchInstance) {
        for (mine, theirs) in self.levels.iter_mut().zip(&other.levels) {
            let Some(theirs) = theirs else { continue };
            match mine {
                None => *mine = Some(theirs.clone()),
                Some(level) => {
                    for c in 0..self.counters {
                        let merged = level.cell(c).combine(theirs.cell(c));
                        level.set(c, merged);
                    }
                }
            }
        }
    }

    pub(crate) fn level_slot(&self, idx: usize) -> Option<&Level> {
        self.levels[idx].as_ref()
    }

    pub(crate) fn from_levels(seed: u64, counters: usize, levels: Vec<Option<Level>>) -> Self {
        SketchInstance { seed, counters, levels }
    }
}

/// `t` independent sketch instances sharing one parameter block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbundanceSketch {
    params: SketchParams,
    k: u32,
    canonical: bool,
    instances: Vec<SketchInstance>,
    locator: LocatorEq,
    total_updates: u64,
}

// Locator is derived from params; compare sketches on the remaining fields only.
#[derive(Clone, Copy, Debug)]
struct LocatorEq(Locator);

impl PartialEq for LocatorEq {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for LocatorEq {}

/// Descriptive metadata recorded alongside the parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmerConfig {
    pub k: u32,
    pub canonical: bool,
}

impl AbundanceSketch {
    /// Empty sketch for generic (non k-mer) items; `k` is recorded as 0.
    pub fn new(params: SketchParams) -> Result<Self, SketchError> {
        Self::for_kmers(params, KmerConfig { k: 0, canonical: false })
    }

    /// Empty sketch that records which k-mer convention fed it.
    pub fn for_kmers(params: SketchParams, kmers: KmerConfig) -> Result<Self, SketchError> {
        params.validate()?;
        let r = params.counters();
        let instances =
            params.seeds.iter().map(|&s| SketchInstance::new(s, r, params.levels)).collect();
        Ok(AbundanceSketch {
            locator: LocatorEq(Locator::new(&params)),
            params,
            k: kmers.k,
            canonical: kmers.canonical,
            instances,
            total_updates: 0,
        })
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn kmer_config(&self) -> KmerConfig {
        KmerConfig { k: self.k, canonical: self.canonical }
    }

    pub fn instances(&self) -> &[SketchInstance] {
        &self.instances
    }

    pub fn total_updates(&self) -> u64 {
        self.total_updates
    }

    pub fn is_empty(&self) -> bool {
        self.total_updates == 0
    }

    /// Feed one item given its hash under each instance's seed.
    pub fn update(&mut self, hashes: &[u64]) -> Result<(), SketchError> {
        if hashes.len() != self.instances.len() {
            return Err(SketchError::HashCount { expected: self.instances.len(), got: hashes.len() });
        }
        let locator = self.locator.0;
        for (inst, &z) in self.instances.iter_mut().zip(hashes) {
            inst.apply(locator.locate(z));
        }
        self.total_updates += 1;
        Ok(())
    }

    /// Feed one item given as packed words, hashing it with every instance seed.
    #[inline]
    pub fn update_words(&mut self, words: &[u64]) {
        let locator = self.locator.0;
        for inst in self.instances.iter_mut() {
            let z = hash_words(words, inst.seed);
            inst.apply(locator.locate(z));
        }
        self.total_updates += 1;
    }

    /// Feed one 64-bit item (for non k-mer streams).
    #[inline]
    pub fn update_u64(&mut self, item: u64) {
        self.update_words(std::slice::from_ref(&item));
    }

    fn check_compatible(&self, other: &AbundanceSketch) -> Result<(), SketchError> {
        if self.params != other.params {
            return Err(SketchError::Merge("parameter or seed mismatch".into()));
        }
        if self.kmer_config() != other.kmer_config() {
            return Err(SketchError::Merge(format!(
                "k-mer convention mismatch ({:?} vs {:?})",
                self.kmer_config(),
                other.kmer_config()
            )));
        }
        Ok(())
    }

    /// Fold `other` into `self`.
    pub fn merge_from(&mut self, other: &AbundanceSketch) -> Result<(), SketchError> {
        self.check_compatible(other)?;
        for (mine, theirs) in self.instances.iter_mut().zip(&other.instances) {
            mine.merge_from(theirs);
        }
        self.total_updates += other.total_updates;
        Ok(())
    }

    pub fn merge(a: &AbundanceSketch, b: &AbundanceSketch) -> Result<AbundanceSketch, SketchError> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    /// Counter values of every cell, instance-major then level then counter.
    /// Two sketches with equal censuses give identical estimates.
    pub fn v_census(&self) -> Vec<i32> {
        let r = self.params.counters();
        let mut out = Vec::with_capacity(self.instances.len() * self.params.levels as usize * r);
        for inst in &self.instances {
            for w in 1..=inst.level_count() {
                match inst.level_values(w) {
                    Some(v) => out.extend_from_slice(v),
                    None => out.extend(std::iter::repeat(0).take(r)),
                }
            }
        }
        out
    }

    /// True when every cell value matches; labels of dirty cells are ignored.
    pub fn v_census_eq(&self, other: &AbundanceSketch) -> bool {
        if self.params != other.params {
            return false;
        }
        self.instances.iter().zip(&other.instances).all(|(a, b)| {
            (1..=a.level_count()).all(|w| match (a.level_values(w), b.level_values(w)) {
                (Some(x), Some(y)) => x == y,
                (Some(x), None) | (None, Some(x)) => x.iter().all(|&v| v == 0),
                (None, None) => true,
            })
        })
    }

    /// Bytes currently held by allocated level arrays.
    pub fn allocated_bytes(&self) -> u64 {
        let per_level = self.params.counters() as u64 * CELL_BYTES;
        self.instances.iter().map(|i| i.allocated_levels() as u64 * per_level).sum()
    }

    pub(crate) fn from_parts(
        params: SketchParams,
        kmers: KmerConfig,
        instances: Vec<SketchInstance>,
        total_updates: u64,
    ) -> Self {
        AbundanceSketch {
            locator: LocatorEq(Locator::new(&params)),
            params,
            k: kmers.k,
            canonical: kmers.canonical,
            instances,
            total_updates,
        }
    }
}
