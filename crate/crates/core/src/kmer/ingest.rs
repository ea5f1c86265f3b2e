use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::thread;

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    for_each_kmer, open_input, parse_records, Compression, ParseError, SequenceFormat,
    SequenceRecord, WindowCounts,
};
use crate::sketch::{AbundanceSketch, KmerConfig, SketchError, SketchParams};

/// Records handed to a worker at a time.
const BATCH_RECORDS: usize = 2048;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error("k must be in 1..={max}, got {k}", max = super::MAX_K)]
    BadK { k: usize },
}

#[derive(Clone, Debug)]
pub struct IngestConfig {
    pub k: usize,
    pub canonical: bool,
    pub params: SketchParams,
    pub workers: usize,
    pub format: SequenceFormat,
    pub compression: Compression,
}

impl IngestConfig {
    pub fn new(k: usize, params: SketchParams) -> Self {
        IngestConfig {
            k,
            canonical: true,
            params,
            workers: 1,
            format: SequenceFormat::Auto,
            compression: Compression::Auto,
        }
    }

    fn empty_sketch(&self) -> Result<AbundanceSketch, SketchError> {
        AbundanceSketch::for_kmers(
            self.params.clone(),
            KmerConfig { k: self.k as u32, canonical: self.canonical },
        )
    }
}

/// Read and k-mer totals of an ingested stream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub reads: u64,
    pub kmers: u64,
    pub bases: u64,
    /// Windows dropped for containing a non-ACGT base.
    pub skipped: u64,
    /// Read length -> number of reads.
    pub read_lengths: BTreeMap<usize, u64>,
}

impl StreamStats {
    pub fn add_record(&mut self, len: usize, emitted: u64, skipped: u64) {
        self.reads += 1;
        self.bases += len as u64;
        self.kmers += emitted;
        self.skipped += skipped;
        *self.read_lengths.entry(len).or_default() += 1;
    }

    pub fn merge(&mut self, other: &StreamStats) {
        self.reads += other.reads;
        self.kmers += other.kmers;
        self.bases += other.bases;
        self.skipped += other.skipped;
        for (&len, &n) in &other.read_lengths {
            *self.read_lengths.entry(len).or_default() += n;
        }
    }

    /// The read length, when every read has the same length.
    pub fn uniform_length(&self) -> Option<usize> {
        match self.read_lengths.len() {
            1 => self.read_lengths.keys().next().copied(),
            _ => None,
        }
    }

    pub fn mean_length(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.bases as f64 / self.reads as f64
        }
    }
}

impl AbundanceSketch {
    /// Feed every k-mer of `seq` under the sketch's recorded k-mer convention.
    ///
    /// Panics if the sketch was not built for k-mers (`k = 0`).
    pub fn add_sequence(&mut self, seq: &[u8]) -> WindowCounts {
        let KmerConfig { k, canonical } = self.kmer_config();
        assert!(k > 0, "sketch was not configured for k-mers");
        for_each_kmer(seq, k as usize, canonical, |w| self.update_words(w))
    }
}

fn sketch_record(sketch: &mut AbundanceSketch, stats: &mut StreamStats, rec: &SequenceRecord) {
    let counts = sketch.add_sequence(&rec.bases);
    stats.add_record(rec.bases.len(), counts.emitted, counts.skipped);
}

/// Sketch every k-mer of every record in `paths` (`-` for stdin).
///
/// With more than one worker the records are spread over private sketches
/// that are merged at the end; the result does not depend on the worker count.
pub fn ingest(
    paths: &[PathBuf],
    config: &IngestConfig,
) -> Result<(AbundanceSketch, StreamStats), IngestError> {
    let mut sources = Vec::with_capacity(paths.len());
    for path in paths {
        let input = open_input(path).map_err(|e| IngestError::Io { path: path.clone(), source: e })?;
        sources.push((path.clone(), input));
    }
    ingest_sources(sources, config)
}

/// [`ingest`] over an in-memory or already opened byte stream.
pub fn ingest_reader<R: Read + Send + 'static>(
    input: R,
    config: &IngestConfig,
) -> Result<(AbundanceSketch, StreamStats), IngestError> {
    ingest_sources(vec![(PathBuf::from("<stream>"), Box::new(input))], config)
}

fn ingest_sources(
    sources: Vec<(PathBuf, Box<dyn Read + Send>)>,
    config: &IngestConfig,
) -> Result<(AbundanceSketch, StreamStats), IngestError> {
    if !(1..=super::MAX_K).contains(&config.k) {
        return Err(IngestError::BadK { k: config.k });
    }
    let mut sketch = config.empty_sketch()?;
    let mut stats = StreamStats::default();
    let workers = config.workers.max(1);
    if workers == 1 {
        let mut rec = SequenceRecord { id: String::new(), bases: Vec::new(), quality: None };
        for (path, input) in sources {
            let mut reader = open_records(&path, input, config)?;
            while reader
                .read_next(&mut rec)
                .map_err(|e| IngestError::Parse { path: path.clone(), source: e })?
            {
                sketch_record(&mut sketch, &mut stats, &rec);
            }
        }
        return Ok((sketch, stats));
    }

    let (tx, rx) = bounded::<Vec<SequenceRecord>>(workers * 4);
    let results = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let rx = rx.clone();
                scope.spawn(move || -> Result<_, SketchError> {
                    let mut sketch = config.empty_sketch()?;
                    let mut stats = StreamStats::default();
                    for batch in rx {
                        for rec in &batch {
                            sketch_record(&mut sketch, &mut stats, rec);
                        }
                    }
                    Ok((sketch, stats))
                })
            })
            .collect();
        drop(rx);
        let produced = produce_batches(sources, config, |batch| tx.send(batch).is_ok());
        drop(tx);
        let joined: Vec<_> = handles.into_iter().map(|h| h.join().expect("ingest worker panicked")).collect();
        (produced, joined)
    });
    let (produced, joined) = results;
    produced?;
    for part in joined {
        let (part_sketch, part_stats) = part?;
        sketch.merge_from(&part_sketch)?;
        stats.merge(&part_stats);
    }
    Ok((sketch, stats))
}

fn open_records(
    path: &Path,
    input: Box<dyn Read + Send>,
    config: &IngestConfig,
) -> Result<super::RecordReader, IngestError> {
    parse_records(input, config.format, config.compression)
        .map_err(|e| IngestError::Parse { path: path.to_path_buf(), source: e })
}

fn produce_batches(
    sources: Vec<(PathBuf, Box<dyn Read + Send>)>,
    config: &IngestConfig,
    mut send: impl FnMut(Vec<SequenceRecord>) -> bool,
) -> Result<(), IngestError> {
    for (path, input) in sources {
        let mut reader = open_records(&path, input, config)?;
        loop {
            let mut batch = Vec::with_capacity(BATCH_RECORDS);
            for rec in reader.by_ref().take(BATCH_RECORDS) {
                batch.push(rec.map_err(|e| IngestError::Parse { path: path.clone(), source: e })?);
            }
            let last = batch.len() < BATCH_RECORDS;
            if !batch.is_empty() && !send(batch) {
                return Ok(());
            }
            if last {
                break;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn fastq(reads: &[&str]) -> Vec<u8> {
        let mut out = Vec::new();
        for (i, r) in reads.iter().enumerate() {
            out.extend_from_slice(format!("@r{i}\n{r}\n+\n{}\n", "I".repeat(r.len())).as_bytes());
        }
        out
    }

    #[test]
    fn empty_input_gives_empty_sketch() {
        let cfg = IngestConfig::new(5, SketchParams::new(3, 6, 1));
        let (sketch, stats) = ingest_reader(Cursor::new(Vec::new()), &cfg).unwrap();
        assert_eq!(sketch.total_updates(), 0);
        assert_eq!(stats, StreamStats::default());
    }

    #[test]
    fn window_arithmetic_with_ambiguity() {
        let data = fastq(&["ACGTACGTAC", "ACGTNCGTAC", "AC"]);
        let cfg = IngestConfig::new(4, SketchParams::new(3, 6, 1));
        let (sketch, stats) = ingest_reader(Cursor::new(data), &cfg).unwrap();
        assert_eq!(stats.reads, 3);
        // 7 windows + (7 - 4 skipped) + 0
        assert_eq!(stats.kmers, 10);
        assert_eq!(stats.skipped, 4);
        assert_eq!(sketch.total_updates(), 10);
        assert_eq!(stats.uniform_length(), None);
    }

    #[test]
    fn worker_count_does_not_change_the_sketch() {
        let reads: Vec<String> = (0..5000)
            .map(|i| (0..60).map(|j| b"ACGT"[((i * 31 + j * j * 7 + i / 3) % 4) as usize] as char).collect())
            .collect();
        let refs: Vec<&str> = reads.iter().map(|s| s.as_str()).collect();
        let data = fastq(&refs);
        let mut cfg = IngestConfig::new(11, SketchParams::new(3, 8, 5));
        let (base, base_stats) = ingest_reader(Cursor::new(data.clone()), &cfg).unwrap();
        for workers in [2, 4, 8] {
            cfg.workers = workers;
            let (s, st) = ingest_reader(Cursor::new(data.clone()), &cfg).unwrap();
            assert!(s.v_census_eq(&base), "workers={workers}");
            assert_eq!(st, base_stats);
        }
    }

    #[test]
    fn parse_errors_carry_the_path() {
        let cfg = IngestConfig::new(3, SketchParams::new(1, 4, 1));
        let err = ingest_reader(Cursor::new(b"@r\nACGT\n+\nII\n".to_vec()), &cfg).unwrap_err();
        assert!(matches!(err, IngestError::Parse { .. }));
        assert!(err.to_string().contains("<stream>"));
    }
}
