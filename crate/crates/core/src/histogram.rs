//! Abundance histograms and their TSV/JSON encodings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub const HISTOGRAM_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramSource {
    Sketch,
    Exact,
}

impl HistogramSource {
    fn as_str(self) -> &'static str {
        match self {
            HistogramSource::Sketch => "sketch",
            HistogramSource::Exact => "exact",
        }
    }
}

#[derive(Debug, Error)]
pub enum HistogramError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("histogram JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported histogram schema version {0}")]
    Schema(u32),
}

/// Map from multiplicity `i` to `f_i`, with F0 and the total k-mer count `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbundanceHistogram<F> {
    pub f0: F,
    pub counts: BTreeMap<u64, F>,
    pub total_kmers: u64,
    pub source: HistogramSource,
    /// k-mer length, when known.
    pub k: Option<u32>,
}

impl<F: Real> AbundanceHistogram<F> {
    pub fn new(source: HistogramSource) -> Self {
        AbundanceHistogram { f0: F::zero(), counts: BTreeMap::new(), total_kmers: 0, source, k: None }
    }

    /// `f_i`, zero when absent.
    pub fn get(&self, i: u64) -> F {
        self.counts.get(&i).copied().unwrap_or_else(F::zero)
    }

    pub fn max_multiplicity(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// `f_0..=f_max` as a dense vector (index 0 is unused and zero).
    pub fn dense(&self, max: u64) -> Vec<F> {
        (0..=max).map(|i| if i == 0 { F::zero() } else { self.get(i) }).collect()
    }

    pub fn sum_counts(&self) -> F {
        self.counts.values().fold(F::zero(), |a, &b| a + b)
    }

    pub fn sum_weighted(&self) -> F {
        self.counts.iter().fold(F::zero(), |a, (&i, &f)| a + F::of_u64(i) * f)
    }

    /// Checks `sum f_i = F0` and `sum i f_i = N` for exact histograms.
    pub fn partition_identities_hold(&self) -> bool {
        self.sum_counts() == self.f0 && self.sum_weighted() == F::of_u64(self.total_kmers)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "#F0\t{}", self.f0).unwrap();
        writeln!(out, "#N\t{}", self.total_kmers).unwrap();
        if let Some(k) = self.k {
            writeln!(out, "#k\t{k}").unwrap();
        }
        writeln!(out, "#source\t{}", self.source.as_str()).unwrap();
        for (i, f) in &self.counts {
            writeln!(out, "{i}\t{f}").unwrap();
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, HistogramError> {
        let mut hist = AbundanceHistogram::new(HistogramSource::Sketch);
        let mut saw_f0 = false;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| HistogramError::Parse { line: line_no, message };
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default();
            let value = fields.next().ok_or_else(|| err("expected two tab-separated columns".into()))?;
            if fields.next().is_some() {
                return Err(err("expected two tab-separated columns".into()));
            }
            match key {
                "#F0" => {
                    hist.f0 = F::of_f64(parse_num(value).map_err(err)?);
                    saw_f0 = true;
                }
                "#N" => hist.total_kmers = parse_num(value).map_err(err)?,
                "#k" => hist.k = Some(parse_num(value).map_err(err)?),
                "#source" => {
                    hist.source = match value {
                        "sketch" => HistogramSource::Sketch,
                        "exact" => HistogramSource::Exact,
                        other => return Err(err(format!("unknown source '{other}'"))),
                    }
                }
                k if k.starts_with('#') => {}
                i => {
                    let i: u64 = parse_num(i).map_err(err)?;
                    if i == 0 {
                        return Err(err("multiplicity must be at least 1".into()));
                    }
                    let f: f64 = parse_num(value).map_err(err)?;
                    if !(f >= 0.0) {
                        return Err(err(format!("negative or invalid count {value}")));
                    }
                    hist.counts.insert(i, F::of_f64(f));
                }
            }
        }
        if !saw_f0 {
            return Err(HistogramError::Parse { line: 1, message: "missing #F0 header".into() });
        }
        Ok(hist)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(HistogramJson::from_histogram(self)).expect("histogram serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, HistogramError> {
        let json: HistogramJson = serde_json::from_value(value)?;
        if json.schema_version != HISTOGRAM_SCHEMA_VERSION {
            return Err(HistogramError::Schema(json.schema_version));
        }
        Ok(AbundanceHistogram {
            f0: F::of_f64(json.f0),
            counts: json.counts.into_iter().map(|[i, f]| (i as u64, F::of_f64(f))).collect(),
            total_kmers: json.total_kmers,
            source: json.source,
            k: json.k,
        })
    }

    /// Parse either encoding, picking JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, HistogramError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(serde_json::from_str(text)?)
        } else {
            Self::from_tsv(text)
        }
    }

    pub fn cast<G: Real>(&self) -> AbundanceHistogram<G> {
        AbundanceHistogram {
            f0: G::of_f64(self.f0.to_f64_lossy()),
            counts: self.counts.iter().map(|(&i, &f)| (i, G::of_f64(f.to_f64_lossy()))).collect(),
            total_kmers: self.total_kmers,
            source: self.source,
            k: self.k,
        }
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse number '{s}'"))
}

#[derive(Serialize, Deserialize)]
struct HistogramJson {
    schema_version: u32,
    source: HistogramSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    f0: f64,
    total_kmers: u64,
    /// `[i, f_i]` pairs in increasing `i`.
    counts: Vec<[f64; 2]>,
}

impl HistogramJson {
    fn from_histogram<F: Real>(h: &AbundanceHistogram<F>) -> Self {
        HistogramJson {
            schema_version: HISTOGRAM_SCHEMA_VERSION,
            source: h.source,
            k: h.k,
            f0: h.f0.to_f64_lossy(),
            total_kmers: h.total_kmers,
            counts: h.counts.iter().map(|(&i, &f)| [i as f64, f.to_f64_lossy()]).collect(),
        }
    }
}
