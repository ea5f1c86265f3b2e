use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

/// Longest supported k-mer.
pub const MAX_K: usize = 1024;

type Words = SmallVec<[u64; 2]>;

/// 2-bit code of a nucleotide (A=0, C=1, G=2, T=3), case-insensitive.
#[inline]
pub fn base_code(b: u8) -> Option<u8> {
    match b {
        b'A' | b'a' => Some(0),
        b'C' | b'c' => Some(1),
        b'G' | b'g' => Some(2),
        b'T' | b't' => Some(3),
        _ => None,
    }
}

const BASES: [u8; 4] = *b"ACGT";

#[inline]
fn word_count(k: usize) -> usize {
    k.div_ceil(32)
}

/// Bits used in the most significant word.
#[inline]
fn top_bits(k: usize) -> u32 {
    (2 * (k - 32 * (word_count(k) - 1))) as u32
}

#[inline]
fn top_mask(k: usize) -> u64 {
    let b = top_bits(k);
    if b == 64 {
        u64::MAX
    } else {
        (1u64 << b) - 1
    }
}

/// A k-mer packed two bits per base, first base most significant.
///
/// Words are big-endian: `words[0]` holds the leading `k mod 32` bases (or 32)
/// in its low bits, so comparing word slices is lexicographic comparison.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Kmer {
    k: u32,
    words: Words,
}

impl Kmer {
    /// Encode an ACGT string; `None` for an empty, oversized or ambiguous sequence.
    pub fn from_bases(bases: &[u8]) -> Option<Kmer> {
        let k = bases.len();
        if k == 0 || k > MAX_K {
            return None;
        }
        let mut roller = KmerRoller::new(k);
        for &b in bases {
            roller.push(base_code(b)?);
        }
        Some(Kmer { k: k as u32, words: roller.fwd })
    }

    pub fn from_words(k: usize, words: &[u64]) -> Kmer {
        assert!((1..=MAX_K).contains(&k) && words.len() == word_count(k));
        let mut words: Words = words.into();
        words[0] &= top_mask(k);
        Kmer { k: k as u32, words }
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Code of the base at position `i`.
    pub fn code_at(&self, i: usize) -> u8 {
        let k = self.k();
        let bit = 2 * (k - 1 - i);
        let n = self.words.len();
        ((self.words[n - 1 - bit / 64] >> (bit % 64)) & 3) as u8
    }

    pub fn reverse_complement(&self) -> Kmer {
        let k = self.k();
        let mut roller = KmerRoller::new(k);
        for i in (0..k).rev() {
            roller.push(3 - self.code_at(i));
        }
        Kmer { k: self.k, words: roller.fwd }
    }

    /// Lexicographic minimum of the k-mer and its reverse complement.
    pub fn canonical(&self) -> Kmer {
        let rc = self.reverse_complement();
        if rc.words < self.words {
            rc
        } else {
            self.clone()
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.words <= self.reverse_complement().words
    }
}

impl Ord for Kmer {
    fn cmp(&self, other: &Self) -> Ordering {
        self.k.cmp(&other.k).then_with(|| self.words.cmp(&other.words))
    }
}

impl PartialOrd for Kmer {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Kmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&decode_words(self.k(), &self.words))
    }
}

impl fmt::Debug for Kmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kmer({self})")
    }
}

/// Decode packed words back into an uppercase ACGT string.
pub fn decode_words(k: usize, words: &[u64]) -> String {
    let n = words.len();
    (0..k)
        .map(|i| {
            let bit = 2 * (k - 1 - i);
            BASES[((words[n - 1 - bit / 64] >> (bit % 64)) & 3) as usize] as char
        })
        .collect()
}

/// Rolling forward and reverse-complement encodings of the last `k` bases.
#[derive(Clone, Debug)]
pub struct KmerRoller {
    k: usize,
    top_shift: u32,
    top_mask: u64,
    fwd: Words,
    rc: Words,
    filled: usize,
}

impl KmerRoller {
    pub fn new(k: usize) -> Self {
        assert!((1..=MAX_K).contains(&k), "k must be in 1..={MAX_K}");
        let n = word_count(k);
        KmerRoller {
            k,
            top_shift: top_bits(k) - 2,
            top_mask: top_mask(k),
            fwd: SmallVec::from_elem(0, n),
            rc: SmallVec::from_elem(0, n),
            filled: 0,
        }
    }

    pub fn reset(&mut self) {
        self.filled = 0;
    }

    /// True once `k` consecutive valid bases have been pushed.
    #[inline]
    pub fn is_full(&self) -> bool {
        self.filled >= self.k
    }

    #[inline]
    pub fn push(&mut self, code: u8) {
        let code = code as u64;
        let n = self.fwd.len();
        for i in 0..n - 1 {
            self.fwd[i] = (self.fwd[i] << 2) | (self.fwd[i + 1] >> 62);
        }
        self.fwd[n - 1] = (self.fwd[n - 1] << 2) | code;
        self.fwd[0] &= self.top_mask;
        for i in (1..n).rev() {
            self.rc[i] = (self.rc[i] >> 2) | (self.rc[i - 1] << 62);
        }
        self.rc[0] = (self.rc[0] >> 2) | ((3 - code) << self.top_shift);
        self.filled += 1;
    }

    pub fn forward(&self) -> &[u64] {
        &self.fwd
    }

    pub fn reverse(&self) -> &[u64] {
        &self.rc
    }

    #[inline]
    pub fn canonical(&self) -> &[u64] {
        if self.rc < self.fwd {
            &self.rc
        } else {
            &self.fwd
        }
    }
}

/// Windows seen while extracting k-mers from one sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowCounts {
    pub emitted: u64,
    /// Windows dropped because they contain a non-ACGT base.
    pub skipped: u64,
}

/// Call `f` with the packed words of every ACGT-only window of `seq`.
pub fn for_each_kmer<F: FnMut(&[u64])>(
    seq: &[u8],
    k: usize,
    canonical: bool,
    mut f: F,
) -> WindowCounts {
    assert!((1..=MAX_K).contains(&k), "k must be in 1..={MAX_K}");
    if seq.len() < k {
        return WindowCounts::default();
    }
    let windows = (seq.len() - k + 1) as u64;
    let emitted = if k <= 32 {
        single_word(seq, k, canonical, &mut f)
    } else {
        let mut roller = KmerRoller::new(k);
        let mut emitted = 0;
        for &b in seq {
            match base_code(b) {
                Some(c) => roller.push(c),
                None => {
                    roller.reset();
                    continue;
                }
            }
            if roller.is_full() {
                f(if canonical { roller.canonical() } else { roller.forward() });
                emitted += 1;
            }
        }
        emitted
    };
    WindowCounts { emitted, skipped: windows - emitted }
}

#[inline]
fn single_word<F: FnMut(&[u64])>(seq: &[u8], k: usize, canonical: bool, f: &mut F) -> u64 {
    let mask = top_mask(k);
    let shift = 2 * (k as u32 - 1);
    let (mut fwd, mut rc) = (0u64, 0u64);
    let mut filled = 0usize;
    let mut emitted = 0;
    for &b in seq {
        let Some(c) = base_code(b) else {
            filled = 0;
            continue;
        };
        let c = c as u64;
        fwd = ((fwd << 2) | c) & mask;
        rc = (rc >> 2) | ((3 - c) << shift);
        filled += 1;
        if filled >= k {
            let word = if canonical { fwd.min(rc) } else { fwd };
            f(std::slice::from_ref(&word));
            emitted += 1;
        }
    }
    emitted
}
