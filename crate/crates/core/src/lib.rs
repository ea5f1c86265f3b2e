//! Streaming k-mer abundance histograms in sublinear memory.
//!
//! The [`sketch`] module holds the multi-level counter sketch that estimates
//! the number of distinct k-mers (F0) and the number seen exactly `i` times
//! (`f_i`). [`kmer`] turns FASTA/FASTQ into hashed k-mers, [`exact`] is the
//! in-memory ground truth, [`models`] reads genome repetitiveness, error rate
//! and genome size off a histogram, and [`synth`] generates datasets with
//! known answers.
//!
//! Estimators and models are generic over the float type; the aliases below
//! fix it to `f64`.

pub mod exact;
pub mod histogram;
pub mod kmer;
pub mod models;
pub mod scalar;
pub mod sketch;
pub mod synth;

pub use exact::{compare, exact_histogram, ErrorReport, ExactCounts};
pub use histogram::{AbundanceHistogram, HistogramSource};
pub use kmer::{ingest, IngestConfig, Kmer, StreamStats};
pub use models::{detect_peaks, fit_model, PeakConfig};
pub use scalar::Real;
pub use sketch::{AbundanceSketch, KmerConfig, SketchError, SketchParams};

/// Histogram with `f64` values.
pub type Histogram = AbundanceHistogram<f64>;
/// Histogram with `f32` values.
pub type Histogram32 = AbundanceHistogram<f32>;
pub type ModelFit = models::HistogramModelFit<f64>;
pub type Peaks = models::PeakDetection<f64>;
pub type GenomeSizeReport = models::GenomeSizeReport<f64>;
