//! Sequence ingestion: record parsing, k-mer extraction and hashing.

mod encode;
mod hash;
mod ingest;
mod reader;

pub use encode::{
    base_code, decode_words, for_each_kmer, Kmer, KmerRoller, WindowCounts, MAX_K,
};
pub use hash::{hash_kmer, hash_words, mix64};
pub use ingest::{ingest, ingest_reader, IngestConfig, IngestError, StreamStats};
pub use reader::{
    open_input, parse_records, Compression, ParseError, RecordReader, SequenceFormat,
    SequenceRecord,
};
