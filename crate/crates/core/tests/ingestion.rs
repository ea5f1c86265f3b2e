use std::collections::HashMap;
use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression as Level;
use kmerlight::exact::exact_count_reader;
use kmerlight::kmer::{ingest_reader, parse_records, Compression, SequenceFormat};
use kmerlight::{exact_histogram, IngestConfig, Kmer, SketchParams};
use proptest::prelude::*;

fn dna() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(prop::sample::select(b"ACGTACGTACGTN".to_vec()), 1..150)
}

fn fasta(records: &[Vec<u8>], width: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        writeln!(out, ">r{i} description").unwrap();
        for chunk in r.chunks(width) {
            out.extend_from_slice(chunk);
            out.push(b'\n');
        }
    }
    out
}

fn fastq(records: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        writeln!(out, "@r{i}").unwrap();
        out.extend_from_slice(r);
        out.extend_from_slice(b"\n+\n");
        out.extend(std::iter::repeat(b'I').take(r.len()));
        out.push(b'\n');
    }
    out
}

fn gzip(data: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Level::fast());
    enc.write_all(data).unwrap();
    enc.finish().unwrap()
}

/// Canonical k-mer counts by brute force over the record strings.
fn naive_counts(records: &[Vec<u8>], k: usize) -> HashMap<Vec<u64>, u64> {
    let mut out = HashMap::new();
    for r in records {
        if r.len() < k {
            continue;
        }
        for w in r.windows(k) {
            if let Some(km) = Kmer::from_bases(w) {
                *out.entry(km.canonical().words().to_vec()).or_default() += 1;
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_formats_parse_to_the_same_records(records in prop::collection::vec(dna(), 1..20), width in 1usize..80) {
        for (bytes, fmt) in [(fasta(&records, width), SequenceFormat::Fasta), (fastq(&records), SequenceFormat::Fastq)] {
            for data in [bytes.clone(), gzip(&bytes)] {
                let got: Vec<Vec<u8>> = parse_records(std::io::Cursor::new(data), SequenceFormat::Auto, Compression::Auto)
                    .unwrap()
                    .map(|r| r.unwrap().bases)
                    .collect();
                prop_assert_eq!(&got, &records, "{:?}", fmt);
            }
        }
    }

    #[test]
    fn exact_counts_match_brute_force(records in prop::collection::vec(dna(), 1..20), k in 1usize..40) {
        let (counts, stats) = exact_count_reader(std::io::Cursor::new(fastq(&records)), k, true, None).unwrap();
        let want = naive_counts(&records, k);
        prop_assert_eq!(counts.distinct(), want.len());
        prop_assert_eq!(counts.total(), want.values().sum::<u64>());
        prop_assert_eq!(stats.kmers, counts.total());
        for (words, n) in &want {
            prop_assert_eq!(counts.multiplicity_words(words), *n);
        }
        let h = exact_histogram::<f64>(&counts);
        prop_assert!(h.partition_identities_hold());
    }
}

#[test]
fn sketch_is_independent_of_worker_count_and_compression() {
    let records: Vec<Vec<u8>> = (0..5000u64)
        .map(|i| (0..120).map(|j| b"ACGT"[((i * 7919 + j * j * 31 + i * j) % 4) as usize]).collect())
        .collect();
    let plain = fastq(&records);
    let mut cfg = IngestConfig::new(21, SketchParams::new(3, 10, 5));
    let (reference, ref_stats) = ingest_reader(std::io::Cursor::new(plain.clone()), &cfg).unwrap();
    for workers in [1, 3, 8] {
        cfg.workers = workers;
        let (s, stats) = ingest_reader(std::io::Cursor::new(gzip(&plain)), &cfg).unwrap();
        assert_eq!(s, reference, "{workers} workers");
        assert_eq!(stats.kmers, ref_stats.kmers);
        assert_eq!(stats.reads, 5000);
    }
    assert_eq!(ref_stats.kmers, 5000 * 100);
}

#[test]
fn truncated_fastq_is_rejected() {
    let mut data = fastq(&[b"ACGTACGT".to_vec(), b"GGGGCCCC".to_vec()]);
    data.truncate(data.len() - 4);
    let cfg = IngestConfig::new(3, SketchParams::new(1, 4, 1));
    assert!(ingest_reader(std::io::Cursor::new(data), &cfg).is_err());
}
