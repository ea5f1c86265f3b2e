//! Synthetic genomes with planted repeats and uniform-coverage reads with
//! substitution errors, so every estimate has a known ground truth.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{ExactCounts, ExactError};

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

const BASES: [u8; 4] = *b"ACGT";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatBlock {
    pub length: usize,
    pub copies: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeSpec {
    pub length: usize,
    pub repeat_blocks: Vec<RepeatBlock>,
    pub seed: u64,
}

/// Per-multiplicity k-mer statistics of a genome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeTruth {
    pub k: usize,
    pub canonical: bool,
    /// `g_m`: positions whose k-mer occurs `m` times in the genome.
    pub positions: BTreeMap<u64, u64>,
    /// `|G_m|`: distinct k-mers occurring `m` times.
    pub distinct: BTreeMap<u64, u64>,
}

impl GenomeTruth {
    pub fn g(&self, m: u64) -> u64 {
        self.positions.get(&m).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct Genome {
    pub sequence: Vec<u8>,
    pub truth: GenomeTruth,
}

fn random_bases(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| BASES[rng.gen_range(0..4)]).collect()
}

/// Exact k-mer census of a genome sequence.
pub fn genome_truth(sequence: &[u8], k: usize, canonical: bool) -> Result<(GenomeTruth, ExactCounts), SynthError> {
    let mut counts = ExactCounts::new(k);
    counts.add_sequence(sequence, canonical)?;
    let distinct = counts.multiplicity_table();
    let positions = distinct.iter().map(|(&m, &d)| (m, m * d)).collect();
    Ok((GenomeTruth { k, canonical, positions, distinct }, counts))
}

/// Random genome with each repeat block copied verbatim at non-overlapping places.
pub fn generate_genome(spec: &GenomeSpec, k: usize, canonical: bool) -> Result<Genome, SynthError> {
    let planted: usize = spec
        .repeat_blocks
        .iter()
        .map(|b| b.length.checked_mul(b.copies as usize))
        .try_fold(0usize, |acc, x| x.and_then(|x| acc.checked_add(x)))
        .ok_or_else(|| SynthError::Config("repeat blocks overflow".into()))?;
    if planted > spec.length {
        return Err(SynthError::Config(format!(
            "repeat blocks cover {planted} bases, more than the genome length {}",
            spec.length
        )));
    }
    if spec.repeat_blocks.iter().any(|b| b.length == 0 || b.copies == 0) {
        return Err(SynthError::Config("repeat blocks need positive length and copy number".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blocks: Vec<Vec<u8>> = spec.repeat_blocks.iter().map(|b| random_bases(&mut rng, b.length)).collect();
    let mut copies: Vec<usize> = spec
        .repeat_blocks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| std::iter::repeat(i).take(b.copies as usize))
        .collect();
    copies.shuffle(&mut rng);
    // Split the background into copies.len() + 1 gaps at random cut points.
    let free = spec.length - planted;
    let mut cuts: Vec<usize> = (0..copies.len()).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut sequence = Vec::with_capacity(spec.length);
    let mut prev = 0;
    for (cut, &block) in cuts.iter().zip(&copies) {
        sequence.extend(random_bases(&mut rng, cut - prev));
        sequence.extend_from_slice(&blocks[block]);
        prev = *cut;
    }
    sequence.extend(random_bases(&mut rng, free - prev));
    debug_assert_eq!(sequence.len(), spec.length);
    let truth = if spec.length >= k {
        genome_truth(&sequence, k, canonical)?.0
    } else {
        GenomeTruth { k, canonical, positions: BTreeMap::new(), distinct: BTreeMap::new() }
    };
    Ok(Genome { sequence, truth })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadSpec {
    pub coverage: f64,
    pub read_length: usize,
    pub error_rate: f64,
    pub seed: u64,
    /// Draw each read from either strand with equal probability.
    pub both_strands: bool,
}

impl ReadSpec {
    pub fn read_count(&self, genome_length: usize) -> u64 {
        (self.coverage * genome_length as f64 / self.read_length as f64).ceil() as u64
    }
}

/// Reads drawn at uniform random starts over a linear genome.
pub struct ReadGenerator<'a> {
    genome: &'a [u8],
    spec: ReadSpec,
    rng: ChaCha8Rng,
    remaining: u64,
    substitutions: u64,
    /// Per-read count of substituted bases for the last read.
    last_errors: u32,
}

impl<'a> ReadGenerator<'a> {
    pub fn new(genome: &'a [u8], spec: ReadSpec) -> Result<Self, SynthError> {
        if spec.read_length == 0 || spec.read_length > genome.len() {
            return Err(SynthError::Config(format!(
                "read length {} must be in 1..={}",
                spec.read_length,
                genome.len()
            )));
        }
        if !(0.0..1.0).contains(&spec.error_rate) {
            return Err(SynthError::Config(format!("error rate {} outside [0, 1)", spec.error_rate)));
        }
        if !(spec.coverage.is_finite() && spec.coverage >= 0.0) {
            return Err(SynthError::Config(format!("coverage {} must be non-negative", spec.coverage)));
        }
        let remaining = spec.read_count(genome.len());
        Ok(ReadGenerator { genome, rng: ChaCha8Rng::seed_from_u64(spec.seed), spec, remaining, substitutions: 0, last_errors: 0 })
    }

    pub fn substitutions(&self) -> u64 {
        self.substitutions
    }

    pub fn last_read_errors(&self) -> u32 {
        self.last_errors
    }

    /// Fill `read` with the next read; false when all reads were produced.
    pub fn next_into(&mut self, read: &mut Vec<u8>) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        let l = self.spec.read_length;
        let start = self.rng.gen_range(0..=self.genome.len() - l);
        read.clear();
        read.extend_from_slice(&self.genome[start..start + l]);
        if self.spec.both_strands && self.rng.gen::<bool>() {
            read.reverse();
            for b in read.iter_mut() {
                *b = complement(*b);
            }
        }
        self.last_errors = 0;
        if self.spec.error_rate > 0.0 {
            for b in read.iter_mut() {
                if self.rng.gen::<f64>() < self.spec.error_rate {
                    let idx = BASES.iter().position(|x| x == b).unwrap_or(0);
                    *b = BASES[(idx + self.rng.gen_range(1..4)) % 4];
                    self.last_errors += 1;
                }
            }
        }
        self.substitutions += self.last_errors as u64;
        true
    }
}

fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'C' => b'G',
        b'G' => b'C',
        b'T' => b'A',
        other => other,
    }
}

/// Read-set facts known by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadTruth {
    pub reads: u64,
    pub read_length: usize,
    pub substitutions: u64,
}

impl ReadTruth {
    /// `N = n (l - k + 1)`; generated reads contain no ambiguous bases.
    pub fn total_kmers(&self, k: usize) -> u64 {
        self.reads * (self.read_length + 1).saturating_sub(k) as u64
    }
}

/// Write reads as FASTQ (constant quality `I`).
pub fn write_reads_fastq<W: Write>(genome: &[u8], spec: &ReadSpec, mut out: W) -> Result<ReadTruth, SynthError> {
    let mut generator = ReadGenerator::new(genome, spec.clone())?;
    let quality = vec![b'I'; spec.read_length];
    let mut read = Vec::with_capacity(spec.read_length);
    let mut n = 0u64;
    while generator.next_into(&mut read) {
        n += 1;
        writeln!(out, "@read{n}")?;
        out.write_all(&read)?;
        out.write_all(b"\n+\n")?;
        out.write_all(&quality)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(ReadTruth { reads: n, read_length: spec.read_length, substitutions: generator.substitutions() })
}

pub fn write_genome_fasta<W: Write>(genome: &[u8], id: &str, mut out: W) -> io::Result<()> {
    writeln!(out, ">{id}")?;
    for line in genome.chunks(80) {
        out.write_all(line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// JSON sidecar describing a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub genome_length: usize,
    pub k: usize,
    pub canonical: bool,
    pub g_m: BTreeMap<u64, u64>,
    pub distinct_by_multiplicity: BTreeMap<u64, u64>,
    pub reads: u64,
    pub read_length: usize,
    pub coverage: f64,
    pub error_rate: f64,
    pub total_kmers: u64,
    /// `c (l - k + 1) / l`.
    pub lambda: f64,
    pub substitutions: u64,
}

impl GroundTruth {
    pub fn new(genome: &Genome, spec: &ReadSpec, reads: &ReadTruth) -> Self {
        let k = genome.truth.k;
        let l = spec.read_length as f64;
        GroundTruth {
            schema_version: TRUTH_SCHEMA_VERSION,
            genome_length: genome.sequence.len(),
            k,
            canonical: genome.truth.canonical,
            g_m: genome.truth.positions.clone(),
            distinct_by_multiplicity: genome.truth.distinct.clone(),
            reads: reads.reads,
            read_length: spec.read_length,
            coverage: spec.coverage,
            error_rate: spec.error_rate,
            total_kmers: reads.total_kmers(k),
            lambda: spec.coverage * (l - k as f64 + 1.0) / l,
            substitutions: reads.substitutions,
        }
    }
}
