//! Bit-level primitives on short cyclic binary sequences.
//!
//! A sequence of length `L` is packed into the low `L` bits of a `u64`, first
//! symbol in the most significant position. With that layout numeric order
//! and lexicographic order of the bit strings coincide.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Longest supported sequence.
pub const MAX_LEN: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinarySequence {
    // field order matters for the derived Ord: length first, then word
    len: u8,
    word: u64,
}

#[inline]
fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

#[inline]
fn rotr(word: u64, d: usize, len: usize) -> u64 {
    if d == 0 {
        return word;
    }
    ((word >> d) | (word << (len - d))) & mask(len)
}

impl BinarySequence {
    /// Packs the low `len` bits of `word`. Higher bits must be clear.
    pub fn new(word: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_LEN {
            return Err(Error::InvalidLength(len));
        }
        if word & !mask(len) != 0 {
            return Err(Error::InvalidParam(format!(
                "word {word:#x} does not fit in {len} bits"
            )));
        }
        Ok(Self { len: len as u8, word })
    }

    /// Builds a sequence from symbols, first symbol first.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() || bits.len() > MAX_LEN {
            return Err(Error::InvalidLength(bits.len()));
        }
        let mut word = 0u64;
        for &b in bits {
            if b > 1 {
                return Err(Error::Parse(format!("symbol {b} is not binary")));
            }
            word = (word << 1) | b as u64;
        }
        Ok(Self { len: bits.len() as u8, word })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(0, len)
    }

    pub fn ones(len: usize) -> Result<Self> {
        Self::new(mask(len), len)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    /// Always false; sequences have at least one symbol.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn word(&self) -> u64 {
        self.word
    }

    /// Symbol at position `i` (0 is the first symbol).
    #[inline]
    pub fn bit(&self, i: usize) -> u8 {
        assert!(i < self.len(), "index {i} out of range");
        ((self.word >> (self.len() - 1 - i)) & 1) as u8
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.bit(i)).collect()
    }

    /// Number of ones.
    #[inline]
    pub fn weight(&self) -> usize {
        self.word.count_ones() as usize
    }

    pub fn complement(&self) -> Self {
        Self { len: self.len, word: !self.word & mask(self.len()) }
    }

    /// Rotates `d` positions to the right: `out[i] = self[(i - d) mod L]`.
    /// Negative `d` rotates left.
    pub fn circular_shift(&self, d: i64) -> Self {
        let l = self.len();
        let d = d.rem_euclid(l as i64) as usize;
        Self { len: self.len, word: rotr(self.word, d, l) }
    }

    /// Smallest rotation, used as the representative of the rotation class.
    pub fn canonical(&self) -> Self {
        let l = self.len();
        let mut best = self.word;
        let mut w = self.word;
        for _ in 1..l {
            w = rotr(w, 1, l);
            best = best.min(w);
        }
        Self { len: self.len, word: best }
    }

    /// True when no rotation is numerically smaller.
    pub fn is_canonical(&self) -> bool {
        is_canonical_word(self.word, self.len())
    }

    /// `min_d weight(self XOR shift(other, d))`.
    pub fn circular_hamming(&self, other: &Self) -> Result<usize> {
        if self.len != other.len {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(circular_hamming_words(self.word, other.word, self.len()))
    }

    /// Longest circular run of `symbol`, capped at `L`.
    pub fn max_circular_run(&self, symbol: u8) -> usize {
        let l = self.len();
        let w = if symbol == 0 { !self.word & mask(l) } else { self.word };
        max_run_word(w, l)
    }

    /// Line-coded version of twice the length: `1 -> 10`, `0 -> 01`.
    pub fn manchester_encode(&self) -> Result<Self> {
        let l = self.len();
        if 2 * l > MAX_LEN {
            return Err(Error::InvalidLength(2 * l));
        }
        let mut word = 0u64;
        for i in 0..l {
            word = (word << 2) | if self.bit(i) == 1 { 0b10 } else { 0b01 };
        }
        Ok(Self { len: (2 * l) as u8, word })
    }
}

/// Free-function form of [`BinarySequence::circular_shift`].
pub fn circular_shift(b: &BinarySequence, d: i64) -> BinarySequence {
    b.circular_shift(d)
}

/// Free-function form of [`BinarySequence::circular_hamming`].
pub fn circular_hamming(b: &BinarySequence, c: &BinarySequence) -> Result<usize> {
    b.circular_hamming(c)
}

/// Free-function form of [`BinarySequence::max_circular_run`].
pub fn max_circular_run(b: &BinarySequence, symbol: u8) -> usize {
    b.max_circular_run(symbol)
}

#[inline]
pub(crate) fn is_canonical_word(word: u64, len: usize) -> bool {
    let mut w = word;
    for _ in 1..len {
        w = rotr(w, 1, len);
        if w < word {
            return false;
        }
    }
    true
}

#[inline]
pub(crate) fn circular_hamming_words(a: u64, b: u64, len: usize) -> usize {
    let mut best = u32::MAX;
    let mut r = b;
    for _ in 0..len {
        best = best.min((a ^ r).count_ones());
        if best == 0 {
            break;
        }
        r = rotr(r, 1, len);
    }
    best as usize
}

// Each AND with the word rotated by one shortens every run by one, so the
// number of rounds until the word empties is the longest circular run.
#[inline]
pub(crate) fn max_run_word(word: u64, len: usize) -> usize {
    if word == mask(len) {
        return len;
    }
    let mut w = word;
    let mut n = 0;
    while w != 0 {
        w &= rotr(w, 1, len);
        n += 1;
    }
    n
}

/// All rotations of a packed word, shift 0 first.
pub(crate) fn rotations(word: u64, len: usize) -> Vec<u64> {
    (0..len).map(|d| rotr(word, d, len)).collect()
}

impl fmt::Display for BinarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.bit(i) == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BinarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinarySequence({self})")
    }
}

impl FromStr for BinarySequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits: Vec<u8> = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Parse(format!("unexpected character {c:?} in bit string"))),
            })
            .collect::<Result<_>>()?;
        Self::from_bits(&bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> BinarySequence {
        x.parse().unwrap()
    }

    #[test]
    fn shift_examples() {
        assert_eq!(s("1010").circular_shift(0), s("1010"));
        assert_eq!(s("1010").circular_shift(1), s("0101"));
        assert_eq!(s("0010111").circular_shift(7), s("0010111"));
        assert_eq!(s("0011").circular_shift(-1), s("0110"));
        assert_eq!(s("0011").circular_shift(1), s("1001"));
    }

    #[test]
    fn hamming_examples() {
        let b = s("0010111");
        assert_eq!(b.circular_hamming(&b).unwrap(), 0);
        assert_eq!(s("00101").circular_hamming(&s("01010")).unwrap(), 0);
        assert_eq!(s("0011").circular_hamming(&s("0101")).unwrap(), 2);
        assert!(s("001").circular_hamming(&s("0011")).is_err());
    }

    #[test]
    fn run_examples() {
        assert_eq!(s("0000").max_circular_run(0), 4);
        assert_eq!(s("1001").max_circular_run(1), 2);
        assert_eq!(s("0010111").max_circular_run(1), 3);
        assert_eq!(s("0010111").max_circular_run(0), 2);
        assert_eq!(s("1111").max_circular_run(0), 0);
    }

    #[test]
    fn canonical_is_smallest() {
        assert_eq!(s("1100").canonical(), s("0011"));
        assert!(s("0011").is_canonical());
        assert!(!s("0110").is_canonical());
    }

    #[test]
    fn manchester_doubles() {
        assert_eq!(s("10").manchester_encode().unwrap(), s("1001"));
        let long = BinarySequence::zeros(33).unwrap();
        assert!(long.manchester_encode().is_err());
    }

    #[test]
    fn parse_roundtrip_full_width() {
        let b = BinarySequence::ones(64).unwrap();
        assert_eq!(b.to_string().parse::<BinarySequence>().unwrap(), b);
        assert_eq!(b.circular_shift(5), b);
        assert!("01x".parse::<BinarySequence>().is_err());
        assert!("".parse::<BinarySequence>().is_err());
    }
}
