use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    pub bases: Vec<u8>,
    /// Present for FASTQ input; same length as `bases`.
    pub quality: Option<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SequenceFormat {
    #[default]
    Auto,
    Fasta,
    Fastq,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Compression {
    #[default]
    Auto,
    None,
    Gzip,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed record at byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

fn malformed<T>(offset: u64, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Malformed { offset, message: message.into() })
}

/// Streaming FASTA/FASTQ parser.
pub struct RecordReader {
    input: Box<dyn BufRead + Send>,
    format: SequenceFormat,
    offset: u64,
    line: Vec<u8>,
    /// FASTA header already consumed while reading the previous record.
    pending_header: Option<(u64, Vec<u8>)>,
    done: bool,
}

/// Open `path` for reading; `-` is standard input.
pub fn open_input(path: &Path) -> io::Result<Box<dyn Read + Send>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        Ok(Box::new(File::open(path)?))
    }
}

/// Wrap a byte stream in a record parser, sniffing gzip and the format as requested.
pub fn parse_records<R: Read + Send + 'static>(
    input: R,
    format: SequenceFormat,
    compression: Compression,
) -> Result<RecordReader, ParseError> {
    let mut raw = BufReader::with_capacity(1 << 16, input);
    let gzip = match compression {
        Compression::Gzip => true,
        Compression::None => false,
        Compression::Auto => raw.fill_buf()?.starts_with(&[0x1f, 0x8b]),
    };
    let mut input: Box<dyn BufRead + Send> = if gzip {
        Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(raw)))
    } else {
        Box::new(raw)
    };
    let format = match format {
        SequenceFormat::Auto => {
            let buf = input.fill_buf()?;
            match buf.iter().find(|b| !b.is_ascii_whitespace()) {
                Some(b'>') => SequenceFormat::Fasta,
                Some(b'@') => SequenceFormat::Fastq,
                None => SequenceFormat::Fasta,
                Some(&b) => {
                    return malformed(0, format!("cannot detect format from first byte {:?}", b as char))
                }
            }
        }
        f => f,
    };
    Ok(RecordReader { input, format, offset: 0, line: Vec::new(), pending_header: None, done: false })
}

fn trim_eol(line: &mut Vec<u8>) {
    while matches!(line.last(), Some(b'\n' | b'\r')) {
        line.pop();
    }
}

fn parse_id(header: &[u8], offset: u64) -> Result<String, ParseError> {
    let id = header[1..].split(|b| b.is_ascii_whitespace()).next().unwrap_or_default();
    if id.is_empty() {
        return malformed(offset, "empty record id");
    }
    Ok(String::from_utf8_lossy(id).into_owned())
}

impl RecordReader {
    pub fn format(&self) -> SequenceFormat {
        self.format
    }

    /// Read one line into `self.line` (without terminator); false at end of input.
    fn next_line(&mut self) -> Result<bool, ParseError> {
        self.line.clear();
        let n = self.input.read_until(b'\n', &mut self.line)?;
        self.offset += n as u64;
        trim_eol(&mut self.line);
        Ok(n > 0)
    }

    /// Read the next record into `rec`, reusing its buffers. Returns false at end of input.
    pub fn read_next(&mut self, rec: &mut SequenceRecord) -> Result<bool, ParseError> {
        if self.done {
            return Ok(false);
        }
        let result = match self.format {
            SequenceFormat::Fastq => self.read_fastq(rec),
            _ => self.read_fasta(rec),
        };
        if !matches!(result, Ok(true)) {
            self.done = true;
        }
        result
    }

    fn read_fasta(&mut self, rec: &mut SequenceRecord) -> Result<bool, ParseError> {
        let (start, header) = match self.pending_header.take() {
            Some(h) => h,
            None => loop {
                let start = self.offset;
                if !self.next_line()? {
                    return Ok(false);
                }
                if self.line.is_empty() {
                    continue;
                }
                if self.line[0] != b'>' {
                    return malformed(start, "expected '>' at start of FASTA record");
                }
                break (start, self.line.clone());
            },
        };
        rec.id = parse_id(&header, start)?;
        rec.bases.clear();
        rec.quality = None;
        loop {
            let line_start = self.offset;
            if !self.next_line()? {
                break;
            }
            if self.line.first() == Some(&b'>') {
                self.pending_header = Some((line_start, self.line.clone()));
                break;
            }
            rec.bases.extend(self.line.iter().filter(|b| !b.is_ascii_whitespace()));
        }
        Ok(true)
    }

    fn read_fastq(&mut self, rec: &mut SequenceRecord) -> Result<bool, ParseError> {
        let start = loop {
            let start = self.offset;
            if !self.next_line()? {
                return Ok(false);
            }
            if !self.line.is_empty() {
                break start;
            }
        };
        if self.line[0] != b'@' {
            return malformed(start, "expected '@' at start of FASTQ record");
        }
        rec.id = parse_id(&self.line, start)?;
        if !self.next_line()? {
            return malformed(start, "truncated FASTQ record: missing sequence");
        }
        rec.bases.clear();
        rec.bases.extend_from_slice(&self.line);
        if !self.next_line()? || self.line.first() != Some(&b'+') {
            return malformed(start, "FASTQ record missing '+' separator");
        }
        if !self.next_line()? {
            return malformed(start, "truncated FASTQ record: missing quality");
        }
        if self.line.len() != rec.bases.len() {
            return malformed(
                start,
                format!(
                    "quality length {} does not match sequence length {} in record '{}'",
                    self.line.len(),
                    rec.bases.len(),
                    rec.id
                ),
            );
        }
        match &mut rec.quality {
            Some(q) => {
                q.clear();
                q.extend_from_slice(&self.line);
            }
            None => rec.quality = Some(self.line.clone()),
        }
        Ok(true)
    }
}

impl Iterator for RecordReader {
    type Item = Result<SequenceRecord, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut rec = SequenceRecord { id: String::new(), bases: Vec::new(), quality: None };
        match self.read_next(&mut rec) {
            Ok(true) => Some(Ok(rec)),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::{Cursor, Write};

    use flate2::write::GzEncoder;

    use super::*;

    fn parse(data: &[u8]) -> Result<Vec<SequenceRecord>, ParseError> {
        parse_records(Cursor::new(data.to_vec()), SequenceFormat::Auto, Compression::Auto)?.collect()
    }

    #[test]
    fn minimal_fastq() {
        let recs = parse(b"@r1\nACGT\n+\nIIII\n").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "r1");
        assert_eq!(recs[0].bases, b"ACGT");
        assert_eq!(recs[0].quality.as_deref(), Some(&b"IIII"[..]));
    }

    #[test]
    fn multi_line_fasta() {
        let recs = parse(b">s desc\nAC\nGT\n>t\r\nGG\r\n").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "s");
        assert_eq!(recs[0].bases, b"ACGT");
        assert_eq!(recs[1].bases, b"GG");
        assert!(recs[0].quality.is_none());
    }

    #[test]
    fn quality_length_mismatch() {
        let err = parse(b"@ok\nAC\n+\nII\n@r2\nACGT\n+\nIII\n").unwrap_err();
        match err {
            ParseError::Malformed { offset, message } => {
                assert_eq!(offset, 12);
                assert!(message.contains("r2"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn empty_id_is_rejected() {
        assert!(matches!(parse(b">\nACGT\n"), Err(ParseError::Malformed { offset: 0, .. })));
        assert!(matches!(parse(b"@ x\nA\n+\nI\n"), Err(ParseError::Malformed { .. })));
    }

    #[test]
    fn gzip_is_sniffed() {
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(b"@a\nACGTN\n+\nIIIII\n@b\nTT\n+\nII\n").unwrap();
        let recs = parse(&enc.finish().unwrap()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].bases, b"TT");
    }

    #[test]
    fn empty_input_has_no_records() {
        assert!(parse(b"").unwrap().is_empty());
        assert!(parse(b"\n\n").unwrap().is_empty());
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!(parse(b"ACGT\n").is_err());
    }

    #[test]
    fn truncated_fastq() {
        assert!(parse(b"@a\nACGT\n+\n").is_err());
        assert!(parse(b"@a\nACGT\n").is_err());
    }
}
