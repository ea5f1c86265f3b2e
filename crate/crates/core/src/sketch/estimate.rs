//! F0 and f_i estimation from a quiescent sketch.

use std::cmp::Ordering;

use super::{AbundanceSketch, SketchError, SketchInstance, DIRTY, V_MAX};
use crate::histogram::{AbundanceHistogram, HistogramSource};
use crate::scalar::Real;

/// Value census of one level: empty, dirty and per-value cell counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelCensus {
    pub zeros: u64,
    pub dirty: u64,
    /// `values[i - 1]` = cells holding value `i`, for `i <= max_value`.
    pub values: Vec<u64>,
}

impl LevelCensus {
    pub fn of(inst: &SketchInstance, w: u32, counters: usize, max_value: usize) -> Self {
        let mut census = LevelCensus { zeros: 0, dirty: 0, values: vec![0; max_value] };
        match inst.level_values(w) {
            None => census.zeros = counters as u64,
            Some(cells) => {
                for &v in cells {
                    match v {
                        0 => census.zeros += 1,
                        DIRTY => census.dirty += 1,
                        v if (v as usize) <= max_value => census.values[v as usize - 1] += 1,
                        _ => {}
                    }
                }
            }
        }
        census
    }

    pub fn count(&self, i: usize) -> u64 {
        self.values.get(i.wrapping_sub(1)).copied().unwrap_or(0)
    }
}

/// Lower median (the middle order statistic for odd lengths).
pub fn median<F: Real>(values: &mut [F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Some(values[(values.len() - 1) / 2])
}

fn per_instance_f0<F: Real>(zeros_by_level: &[u64], counters: usize) -> Option<F> {
    let r = counters as i64;
    // Closest empty fraction to one half; levels with no empty cell cannot be used.
    let (w, zeros) = zeros_by_level
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0)
        .min_by_key(|(w, &z)| ((2 * z as i64 - r).abs(), *w))
        .map(|(w, &z)| (w as u32 + 1, z))?;
    let r_f = F::of_u64(counters as u64);
    let p0 = F::of_u64(zeros) / r_f;
    let ln_keep = (-F::one() / r_f).ln_1p();
    Some(F::pow2(w) * p0.ln() / ln_keep)
}

fn per_instance_fi<F: Real>(counts_by_level: &[u64], counters: usize, f0_hat: F) -> F {
    let Some((w, count)) = counts_by_level
        .iter()
        .enumerate()
        .max_by(|(wa, a), (wb, b)| a.cmp(b).then(wb.cmp(wa)))
        .map(|(w, &c)| (w as u32 + 1, c))
    else {
        return F::zero();
    };
    if count == 0 {
        return F::zero();
    }
    let r = F::of_u64(counters as u64);
    let scale = F::pow2(w);
    let p0 = ((f0_hat / scale) * (-F::one() / r).ln_1p()).exp();
    let pi = F::of_u64(count) / r;
    scale * (r - F::one()) * pi / p0
}

fn zeros_by_level(inst: &SketchInstance, counters: usize) -> Vec<u64> {
    (1..=inst.level_count())
        .map(|w| match inst.level_values(w) {
            None => counters as u64,
            Some(cells) => cells.iter().filter(|&&v| v == 0).count() as u64,
        })
        .collect()
}

fn f0_from_zeros<F: Real>(zeros: &[Vec<u64>], counters: usize) -> Result<F, SketchError> {
    let mut estimates: Vec<F> = zeros.iter().filter_map(|z| per_instance_f0(z, counters)).collect();
    median(&mut estimates).ok_or(SketchError::Saturated)
}

/// Estimated number of distinct items. An empty sketch estimates 0.
///
/// Per instance, the level whose fraction of empty counters is closest to one
/// half is used (ties to the shallower level); levels without empty counters
/// are skipped and an instance with none left is dropped from the median.
pub fn estimate_f0<F: Real>(sketch: &AbundanceSketch) -> Result<F, SketchError> {
    if sketch.is_empty() {
        return Ok(F::zero());
    }
    let r = sketch.params().counters();
    let zeros: Vec<Vec<u64>> = sketch.instances().iter().map(|i| zeros_by_level(i, r)).collect();
    f0_from_zeros(&zeros, r)
}

fn check_multiplicity(i: u64) -> Result<(), SketchError> {
    if i == 0 || i > V_MAX as u64 {
        return Err(SketchError::UnsupportedMultiplicity(i));
    }
    Ok(())
}

/// Estimated number of distinct items seen exactly `i` times, given an F0 estimate
/// from the same sketch.
pub fn estimate_fi<F: Real>(sketch: &AbundanceSketch, i: u64, f0_hat: F) -> Result<F, SketchError> {
    check_multiplicity(i)?;
    if sketch.is_empty() {
        return Ok(F::zero());
    }
    let r = sketch.params().counters();
    let target = i as i32;
    let mut estimates: Vec<F> = sketch
        .instances()
        .iter()
        .map(|inst| {
            let counts: Vec<u64> = (1..=inst.level_count())
                .map(|w| {
                    inst.level_values(w)
                        .map_or(0, |cells| cells.iter().filter(|&&v| v == target).count() as u64)
                })
                .collect();
            per_instance_fi(&counts, r, f0_hat)
        })
        .collect();
    Ok(median(&mut estimates).unwrap_or_else(F::zero))
}

/// F0 and f_1..f_max_i in one pass over the counters.
pub fn estimate_histogram<F: Real>(
    sketch: &AbundanceSketch,
    max_i: u64,
) -> Result<AbundanceHistogram<F>, SketchError> {
    check_multiplicity(max_i.max(1))?;
    let kc = sketch.kmer_config();
    let mut hist = AbundanceHistogram::new(HistogramSource::Sketch);
    hist.total_kmers = sketch.total_updates();
    hist.k = (kc.k > 0).then_some(kc.k);
    if sketch.is_empty() {
        return Ok(hist);
    }
    let r = sketch.params().counters();
    let max = max_i as usize;
    let censuses: Vec<Vec<LevelCensus>> = sketch
        .instances()
        .iter()
        .map(|inst| (1..=inst.level_count()).map(|w| LevelCensus::of(inst, w, r, max)).collect())
        .collect();
    let zeros: Vec<Vec<u64>> =
        censuses.iter().map(|levels| levels.iter().map(|c| c.zeros).collect()).collect();
    let f0: F = f0_from_zeros(&zeros, r)?;
    hist.f0 = f0;
    for i in 1..=max {
        let mut estimates: Vec<F> = censuses
            .iter()
            .map(|levels| {
                let counts: Vec<u64> = levels.iter().map(|c| c.count(i)).collect();
                per_instance_fi(&counts, r, f0)
            })
            .collect();
        hist.counts.insert(i as u64, median(&mut estimates).unwrap_or_else(F::zero));
    }
    Ok(hist)
}
