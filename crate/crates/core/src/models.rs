//! Generative-model estimators on top of an abundance histogram.
//!
//! True k-mers at a genome position are sampled `Poi(lambda')` times, so the
//! distinct k-mers occurring `m` times in the genome form a peak near
//! `m * lambda'` of height `|G_m| / sqrt(2 pi m lambda')`, where `|G_m|` is the
//! number of such k-mers and `g_m = m |G_m|` the number of genome positions
//! they cover. Erroneous k-mers pile up at low multiplicities; their mass
//! `N_e` gives the k-mer error rate `lambda_e`, and with it the total rate
//! `lambda = N / g = c (l - k + 1) / l`, coverage and genome size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::AbundanceHistogram;
use crate::scalar::Real;

pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("no local minimum separates the error peak from the true k-mer peaks; try higher coverage or a manual --error-cutoff")]
    NoErrorBoundary,
    #[error("no true k-mer peak beyond multiplicity {0}")]
    NoPeak(u64),
    #[error("erroneous k-mer mass {n_e} is not below the total k-mer count {n}")]
    Inconsistent { n_e: f64, n: u64 },
    #[error("invalid model input: {0}")]
    BadInput(String),
}

/// Tunables of the peak detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Width of the centred moving average.
    pub smoothing_window: usize,
    /// A peak of order `m` must lie within `tolerance * lambda'` of `m * lambda'`.
    pub match_tolerance: f64,
    /// The first peak is the first local maximum at least this fraction of the tallest one.
    pub min_relative_height: f64,
    pub max_order: u32,
    /// Peak heights come from a log-quadratic fit over `+-scale * sqrt(position)` bins
    /// around the peak; 0 reads the single histogram bin.
    pub height_fit_scale: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            smoothing_window: 5,
            match_tolerance: 0.25,
            min_relative_height: 0.1,
            max_order: 16,
            height_fit_scale: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak<F> {
    pub position: u64,
    pub value: F,
    pub order: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakDetection<F> {
    /// Last multiplicity attributed to erroneous k-mers.
    pub error_region_end: u64,
    pub peaks: Vec<Peak<F>>,
}

/// Centred moving average over `1..=max` (index 0 stays zero); windows are clipped at the ends.
pub fn smooth<F: Real>(dense: &[F], window: usize) -> Vec<F> {
    let half = window / 2;
    let max = dense.len().saturating_sub(1);
    let mut out = vec![F::zero(); dense.len()];
    for i in 1..=max {
        let lo = i.saturating_sub(half).max(1);
        let hi = (i + half).min(max);
        let sum = dense[lo..=hi].iter().fold(F::zero(), |a, &b| a + b);
        out[i] = sum / F::of_u64((hi - lo + 1) as u64);
    }
    out
}

/// Locate the error/signal boundary and the true k-mer peaks.
pub fn detect_peaks<F: Real>(
    hist: &AbundanceHistogram<F>,
    error_cutoff_hint: Option<u64>,
    config: &PeakConfig,
) -> Result<PeakDetection<F>, FitError> {
    let max = hist.max_multiplicity() as usize;
    if max < 3 {
        return Err(FitError::NoErrorBoundary);
    }
    let dense = hist.dense(max as u64);
    let s = smooth(&dense, config.smoothing_window);
    let end = match error_cutoff_hint {
        Some(h) => h as usize,
        None => (1..max).find(|&i| s[i + 1] > s[i]).ok_or(FitError::NoErrorBoundary)?,
    };
    let candidates = local_maxima(&s, end + 1, max);
    let tallest = candidates.iter().map(|&i| s[i]).fold(F::zero(), F::max);
    let floor = tallest * F::of_f64(config.min_relative_height);
    let first = *candidates.iter().find(|&&i| s[i] >= floor).ok_or(FitError::NoPeak(end as u64))?;
    let tol = config.match_tolerance;
    let best_near = |center: f64, radius: f64| {
        candidates
            .iter()
            .copied()
            .filter(|&i| (i as f64 - center).abs() <= radius)
            .max_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap().then(b.cmp(&a)))
    };
    let first = best_near(first as f64, tol * first as f64).unwrap_or(first);
    let base = first as f64;
    let height = |i: usize| peak_height(&dense, i, config.height_fit_scale);
    let mut peaks = vec![Peak { position: first as u64, value: height(first), order: 1 }];
    for m in 2..=config.max_order {
        let center = m as f64 * base;
        if center - tol * base > max as f64 {
            break;
        }
        if let Some(i) = best_near(center, tol * base) {
            if i > peaks.last().unwrap().position as usize {
                peaks.push(Peak { position: i as u64, value: height(i), order: m });
            }
        }
    }
    Ok(PeakDetection { error_region_end: end as u64, peaks })
}

/// Local maxima of `s` in `from..max`; a flat top counts once, at its middle.
fn local_maxima<F: Real>(s: &[F], from: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = from.max(2);
    while i < max {
        if s[i] > s[i - 1] {
            let mut j = i;
            while j + 1 < max && s[j + 1] == s[i] {
                j += 1;
            }
            if s[j + 1] < s[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Height of the peak at `pos`: the vertex of a least-squares parabola through
/// `ln f_i` over a window around `pos`, or the bin itself when the fit is
/// unusable.
pub fn peak_height<F: Real>(dense: &[F], pos: usize, scale: f64) -> F {
    let raw = dense[pos];
    let half = (scale * (pos as f64).sqrt()).round() as usize;
    if half == 0 || pos <= half || pos + half >= dense.len() {
        return raw;
    }
    // Normal equations for y = a + b d + c d^2 over symmetric d; odd moments vanish.
    let (mut s0, mut s2, mut s4) = (0.0, 0.0, 0.0);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for i in pos - half..=pos + half {
        let y = dense[i].to_f64_lossy();
        if !(y > 0.0) {
            return raw;
        }
        let d = i as f64 - pos as f64;
        let ly = y.ln();
        s0 += 1.0;
        s2 += d * d;
        s4 += d * d * d * d;
        t0 += ly;
        t1 += d * ly;
        t2 += d * d * ly;
    }
    let det = s0 * s4 - s2 * s2;
    let a = (t0 * s4 - t2 * s2) / det;
    let c = (s0 * t2 - s2 * t0) / det;
    let b = t1 / s2;
    if !(c < 0.0) {
        return raw;
    }
    let vertex = -b / (2.0 * c);
    if vertex.abs() > half as f64 {
        return raw;
    }
    F::of_f64((a - b * b / (4.0 * c)).exp())
}

/// Expected height of the order-`m` peak given `g_m` genome positions.
pub fn peak_value_from_positions<F: Real>(g_m: F, m: u32, lambda_prime: F) -> F {
    let m = F::of_u64(m as u64);
    g_m / (m * two_pi_m_lambda(m, lambda_prime).sqrt())
}

/// Expected height of the order-`m` peak given `|G_m|` distinct genome k-mers.
pub fn peak_value_from_distinct<F: Real>(distinct: F, m: u32, lambda_prime: F) -> F {
    distinct / two_pi_m_lambda(F::of_u64(m as u64), lambda_prime).sqrt()
}

/// Inverse of [`peak_value_from_positions`].
pub fn positions_from_peak<F: Real>(value: F, m: u32, lambda_prime: F) -> F {
    let m = F::of_u64(m as u64);
    value * m * two_pi_m_lambda(m, lambda_prime).sqrt()
}

fn two_pi_m_lambda<F: Real>(m: F, lambda_prime: F) -> F {
    F::of_f64(std::f64::consts::TAU) * m * lambda_prime
}

/// `lambda = c (l - k + 1) / l`.
pub fn lambda_from_coverage<F: Real>(coverage: F, read_length: u32, k: u32) -> F {
    coverage * windows_per_read(read_length, k) / F::of_u64(read_length as u64)
}

/// `c = lambda l / (l - k + 1)`.
pub fn coverage_from_lambda<F: Real>(lambda: F, read_length: u32, k: u32) -> F {
    lambda * F::of_u64(read_length as u64) / windows_per_read(read_length, k)
}

/// `g = N l / (c (l - k + 1))`.
pub fn genome_size_from_coverage<F: Real>(total_kmers: u64, coverage: F, read_length: u32, k: u32) -> F {
    F::of_u64(total_kmers) * F::of_u64(read_length as u64) / (coverage * windows_per_read(read_length, k))
}

fn windows_per_read<F: Real>(read_length: u32, k: u32) -> F {
    F::of_u64((read_length as u64 + 1).saturating_sub(k as u64))
}

/// `lambda_e = lambda' N_e / (N - N_e)`.
pub fn kmer_error_rate<F: Real>(lambda_prime: F, n_e: F, total_kmers: u64) -> F {
    lambda_prime * n_e / (F::of_u64(total_kmers) - n_e)
}

/// `sum_{i <= cutoff} i f_i`.
pub fn erroneous_mass<F: Real>(hist: &AbundanceHistogram<F>, cutoff: u64) -> F {
    if cutoff == 0 {
        return F::zero();
    }
    hist.counts.range(1..=cutoff).fold(F::zero(), |a, (&i, &f)| a + F::of_u64(i) * f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatClass<F> {
    pub order: u32,
    pub position: u64,
    pub peak_value: F,
    /// Genome positions whose k-mer occurs `order` times (`g_m`).
    pub positions: F,
    /// Distinct genome k-mers occurring `order` times (`|G_m|`).
    pub distinct: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramModelFit<F> {
    pub lambda_prime: F,
    pub lambda_e: F,
    pub lambda: F,
    pub coverage: F,
    pub read_length: u32,
    pub k: u32,
    pub genome_size: F,
    pub repeats: Vec<RepeatClass<F>>,
    pub n_e_hat: F,
    pub total_kmers: u64,
    pub error_cutoff: u64,
}

impl<F: Real> HistogramModelFit<F> {
    /// `g_m` by order.
    pub fn g_m(&self) -> BTreeMap<u32, F> {
        self.repeats.iter().map(|r| (r.order, r.positions)).collect()
    }
}

/// Fit the model to `hist` given detected peaks and the read length.
pub fn fit_model<F: Real>(
    hist: &AbundanceHistogram<F>,
    detection: &PeakDetection<F>,
    read_length: u32,
    k: u32,
) -> Result<HistogramModelFit<F>, FitError> {
    if k == 0 || read_length < k {
        return Err(FitError::BadInput(format!("read length {read_length} must be at least k = {k}")));
    }
    if detection.peaks.is_empty() {
        return Err(FitError::NoPeak(detection.error_region_end));
    }
    let (num, den) = detection.peaks.iter().fold((F::zero(), F::zero()), |(n, d), p| {
        let per = F::of_u64(p.position) / F::of_u64(p.order as u64);
        (n + p.value * per, d + p.value)
    });
    let lambda_prime = if den > F::zero() {
        num / den
    } else {
        F::of_u64(detection.peaks[0].position) / F::of_u64(detection.peaks[0].order as u64)
    };
    let repeats = detection
        .peaks
        .iter()
        .map(|p| RepeatClass {
            order: p.order,
            position: p.position,
            peak_value: p.value,
            positions: positions_from_peak(p.value, p.order, lambda_prime),
            distinct: p.value * two_pi_m_lambda(F::of_u64(p.order as u64), lambda_prime).sqrt(),
        })
        .collect();
    let n = hist.total_kmers;
    let n_e = erroneous_mass(hist, detection.error_region_end);
    if n_e >= F::of_u64(n) {
        return Err(FitError::Inconsistent { n_e: n_e.to_f64_lossy(), n });
    }
    let lambda_e = kmer_error_rate(lambda_prime, n_e, n);
    let lambda = lambda_prime + lambda_e;
    let coverage = coverage_from_lambda(lambda, read_length, k);
    let genome_size = genome_size_from_coverage(n, coverage, read_length, k);
    Ok(HistogramModelFit {
        lambda_prime,
        lambda_e,
        lambda,
        coverage,
        read_length,
        k,
        genome_size,
        repeats,
        n_e_hat: n_e,
        total_kmers: n,
        error_cutoff: detection.error_region_end,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeSizeEstimate<F> {
    pub route: String,
    pub genome_size: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDifference<F> {
    pub a: String,
    pub b: String,
    /// `|a - b| / min(a, b)`.
    pub relative_difference: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeSizeReport<F> {
    pub estimates: Vec<GenomeSizeEstimate<F>>,
    pub pairwise: Vec<PairwiseDifference<F>>,
}

impl<F: Real> GenomeSizeReport<F> {
    pub fn max_relative_difference(&self) -> F {
        self.pairwise.iter().map(|p| p.relative_difference).fold(F::zero(), F::max)
    }
}

/// Genome size by the fitted rate, by a known coverage, and from a known reference length.
pub fn estimate_genome_size_consistency<F: Real>(
    fit: &HistogramModelFit<F>,
    known_coverage: Option<F>,
    reference_length: Option<u64>,
) -> GenomeSizeReport<F> {
    let mut estimates = vec![GenomeSizeEstimate { route: "fitted_lambda".into(), genome_size: fit.genome_size }];
    if let Some(c) = known_coverage {
        estimates.push(GenomeSizeEstimate {
            route: "known_coverage".into(),
            genome_size: genome_size_from_coverage(fit.total_kmers, c, fit.read_length, fit.k),
        });
    }
    if let Some(len) = reference_length {
        estimates.push(GenomeSizeEstimate { route: "reference".into(), genome_size: F::of_u64(len) });
    }
    let mut pairwise = Vec::new();
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            let lo = a.genome_size.min(b.genome_size);
            pairwise.push(PairwiseDifference {
                a: a.route.clone(),
                b: b.route.clone(),
                relative_difference: (a.genome_size - b.genome_size).abs() / lo,
            });
        }
    }
    GenomeSizeReport { estimates, pairwise }
}

/// `F0' = F0 - sum_{i <= cutoff} f_i`: distinct k-mers outside the error region.
pub fn estimate_true_distinct<F: Real>(hist: &AbundanceHistogram<F>, error_region_end: u64) -> F {
    if error_region_end == 0 {
        return hist.f0;
    }
    let erroneous = hist.counts.range(1..=error_region_end).fold(F::zero(), |a, (_, &f)| a + f);
    hist.f0 - erroneous
}
