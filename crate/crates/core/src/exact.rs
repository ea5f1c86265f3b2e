//! Exact k-mer counting and error reports against exact histograms.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};
use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{AbundanceHistogram, HistogramSource};
use crate::kmer::{
    for_each_kmer, mix64, open_input, parse_records, Compression, Kmer, ParseError,
    SequenceFormat, SequenceRecord, StreamStats,
};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("exact counter capacity exceeded: more than {limit} distinct k-mers")]
    Capacity { limit: usize },
    #[error("k-mer of length {got} fed to a k={expected} counter")]
    WrongK { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Hasher for keys that are already packed k-mer words.
#[derive(Default)]
pub struct WordHasher(u64);

impl Hasher for WordHasher {
    fn finish(&self) -> u64 {
        mix64(self.0)
    }
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut b = [0u8; 8];
            b[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(b));
        }
    }
    fn write_u64(&mut self, n: u64) {
        self.0 = mix64(self.0 ^ n).wrapping_add(n);
    }
    fn write_usize(&mut self, n: usize) {
        self.write_u64(n as u64);
    }
}

type WordMap<K> = HashMap<K, u64, BuildHasherDefault<WordHasher>>;

#[derive(Clone, Debug)]
enum Table {
    Single(WordMap<u64>),
    Wide(WordMap<Box<[u64]>>),
}

/// Exact multiplicity of every distinct k-mer.
#[derive(Clone, Debug)]
pub struct ExactCounts {
    k: usize,
    table: Table,
    total: u64,
    limit: Option<usize>,
}

impl ExactCounts {
    pub fn new(k: usize) -> Self {
        let table = if k <= 32 { Table::Single(WordMap::default()) } else { Table::Wide(WordMap::default()) };
        ExactCounts { k, table, total: 0, limit: None }
    }

    /// Fail instead of growing past `limit` distinct k-mers.
    pub fn with_capacity_limit(mut self, limit: usize) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Total occurrences counted (`N`).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct k-mers (exact F0).
    pub fn distinct(&self) -> usize {
        match &self.table {
            Table::Single(m) => m.len(),
            Table::Wide(m) => m.len(),
        }
    }

    /// Count one k-mer given as packed words.
    pub fn add_words(&mut self, words: &[u64]) -> Result<(), ExactError> {
        match &mut self.table {
            Table::Single(m) => {
                if let Some(c) = m.get_mut(&words[0]) {
                    *c += 1;
                } else {
                    if let Some(limit) = self.limit.filter(|&l| m.len() >= l) {
                        return Err(ExactError::Capacity { limit });
                    }
                    m.insert(words[0], 1);
                }
            }
            Table::Wide(m) => {
                if let Some(c) = m.get_mut(words) {
                    *c += 1;
                } else {
                    if let Some(limit) = self.limit.filter(|&l| m.len() >= l) {
                        return Err(ExactError::Capacity { limit });
                    }
                    m.insert(words.into(), 1);
                }
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn add(&mut self, kmer: &Kmer) -> Result<(), ExactError> {
        if kmer.k() != self.k {
            return Err(ExactError::WrongK { expected: self.k, got: kmer.k() });
        }
        self.add_words(kmer.words())
    }

    pub fn multiplicity_words(&self, words: &[u64]) -> u64 {
        match &self.table {
            Table::Single(m) => m.get(&words[0]).copied().unwrap_or(0),
            Table::Wide(m) => m.get(words).copied().unwrap_or(0),
        }
    }

    pub fn multiplicity(&self, kmer: &Kmer) -> u64 {
        if kmer.k() != self.k {
            return 0;
        }
        self.multiplicity_words(kmer.words())
    }

    /// Visit every distinct k-mer with its multiplicity.
    pub fn for_each(&self, mut f: impl FnMut(&[u64], u64)) {
        match &self.table {
            Table::Single(m) => m.iter().for_each(|(w, &c)| f(std::slice::from_ref(w), c)),
            Table::Wide(m) => m.iter().for_each(|(w, &c)| f(w, c)),
        }
    }

    /// Multiplicity -> number of distinct k-mers with that multiplicity.
    pub fn multiplicity_table(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        self.for_each(|_, c| *out.entry(c).or_default() += 1);
        out
    }

    /// Count every k-mer of `seq`, returning the window census.
    pub fn add_sequence(&mut self, seq: &[u8], canonical: bool) -> Result<crate::kmer::WindowCounts, ExactError> {
        let mut err = None;
        let counts = for_each_kmer(seq, self.k, canonical, |w| {
            if err.is_none() {
                if let Err(e) = self.add_words(w) {
                    err = Some(e);
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(counts),
        }
    }
}

/// Exact counts of a k-mer stream.
pub fn exact_count<'a, I: IntoIterator<Item = &'a Kmer>>(k: usize, kmers: I) -> Result<ExactCounts, ExactError> {
    let mut counts = ExactCounts::new(k);
    for km in kmers {
        counts.add(km)?;
    }
    Ok(counts)
}

/// Exact counts of every k-mer in the records of `inputs`.
pub fn exact_count_reader<R: Read + Send + 'static>(
    input: R,
    k: usize,
    canonical: bool,
    limit: Option<usize>,
) -> Result<(ExactCounts, StreamStats), ExactError> {
    exact_count_sources(vec![(PathBuf::from("<stream>"), Box::new(input))], k, canonical, limit)
}

pub fn exact_count_paths(
    paths: &[PathBuf],
    k: usize,
    canonical: bool,
    limit: Option<usize>,
) -> Result<(ExactCounts, StreamStats), ExactError> {
    let mut sources: Vec<(PathBuf, Box<dyn Read + Send>)> = Vec::new();
    for p in paths {
        let input = open_input(p).map_err(|e| ExactError::Io { path: p.clone(), source: e })?;
        sources.push((p.clone(), input));
    }
    exact_count_sources(sources, k, canonical, limit)
}

fn exact_count_sources(
    sources: Vec<(PathBuf, Box<dyn Read + Send>)>,
    k: usize,
    canonical: bool,
    limit: Option<usize>,
) -> Result<(ExactCounts, StreamStats), ExactError> {
    let mut counts = ExactCounts::new(k);
    counts.limit = limit;
    let mut stats = StreamStats::default();
    let mut rec = SequenceRecord { id: String::new(), bases: Vec::new(), quality: None };
    for (path, input) in sources {
        let parse_err = |e| ExactError::Parse { path: path.clone(), source: e };
        let mut reader = parse_records(input, SequenceFormat::Auto, Compression::Auto).map_err(parse_err)?;
        while reader.read_next(&mut rec).map_err(parse_err)? {
            let w = counts.add_sequence(&rec.bases, canonical)?;
            stats.add_record(rec.bases.len(), w.emitted, w.skipped);
        }
    }
    Ok((counts, stats))
}

/// Exact abundance histogram: `f_i` = number of k-mers with multiplicity `i`.
pub fn exact_histogram<F: Real>(counts: &ExactCounts) -> AbundanceHistogram<F> {
    let mut hist = AbundanceHistogram::new(HistogramSource::Exact);
    hist.f0 = F::of_u64(counts.distinct() as u64);
    hist.total_kmers = counts.total();
    hist.k = Some(counts.k() as u32);
    hist.counts = counts.multiplicity_table().into_iter().map(|(i, f)| (i, F::of_u64(f))).collect();
    hist
}

/// Which statistic an error entry refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    F0,
    F(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatError {
    pub statistic: Statistic,
    pub exact: f64,
    pub estimate: f64,
    /// `|estimate - exact| / exact`.
    pub relative_error: f64,
    /// Rarity `ceil(F0 / f_i)`; 1 for F0 itself.
    pub lambda: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGroup {
    pub lambda: u64,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
}

/// Relative errors of an estimated histogram against an exact one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub entries: Vec<StatError>,
    /// Statistics skipped because their exact value is zero.
    pub excluded: usize,
    pub groups: Vec<LambdaGroup>,
}

pub fn relative_error(estimate: f64, exact: f64) -> Option<f64> {
    (exact != 0.0).then(|| (estimate - exact).abs() / exact)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Group entries by rarity `lambda` and summarise each group.
pub fn group_by_lambda<'a>(entries: impl IntoIterator<Item = &'a StatError>) -> Vec<LambdaGroup> {
    let mut by: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for e in entries {
        by.entry(e.lambda).or_default().push(e.relative_error);
    }
    by.into_iter()
        .map(|(lambda, errs)| {
            let (mean, std_dev) = mean_std(&errs);
            LambdaGroup { lambda, count: errs.len(), mean, std_dev }
        })
        .collect()
}

/// Compare F0 and `f_1..=f_max_i` of `estimated` against `exact`.
pub fn compare<F: Real, G: Real>(
    estimated: &AbundanceHistogram<F>,
    exact: &AbundanceHistogram<G>,
    max_i: u64,
) -> ErrorReport {
    let exact_f0 = exact.f0.to_f64_lossy();
    let mut entries = Vec::new();
    let mut excluded = 0;
    let mut push = |statistic, est: f64, ex: f64, lambda| match relative_error(est, ex) {
        Some(relative_error) => entries.push(StatError { statistic, exact: ex, estimate: est, relative_error, lambda }),
        None => excluded += 1,
    };
    push(Statistic::F0, estimated.f0.to_f64_lossy(), exact_f0, 1);
    for i in 1..=max_i {
        let ex = exact.get(i).to_f64_lossy();
        let lambda = if ex > 0.0 { (exact_f0 / ex).ceil() as u64 } else { 0 };
        push(Statistic::F(i), estimated.get(i).to_f64_lossy(), ex, lambda);
    }
    let groups = group_by_lambda(&entries);
    ErrorReport { entries, excluded, groups }
}

/// Per-statistic mean and spread of relative errors over repeated trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub statistic: Statistic,
    pub lambda: u64,
    pub trials: usize,
    pub mean: f64,
    pub std_dev: f64,
}

pub fn summarize_trials(reports: &[ErrorReport]) -> Vec<TrialSummary> {
    let mut by: BTreeMap<Statistic, (u64, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        for e in &r.entries {
            let slot = by.entry(e.statistic).or_insert((e.lambda, Vec::new()));
            slot.1.push(e.relative_error);
        }
    }
    by.into_iter()
        .map(|(statistic, (lambda, errs))| {
            let (mean, std_dev) = mean_std(&errs);
            TrialSummary { statistic, lambda, trials: errs.len(), mean, std_dev }
        })
        .collect()
}
