//! Toeplitz-hashing randomness extraction.
//!
//! An `m × n` Toeplitz matrix over GF(2) is fixed by `n + m − 1` seed bits:
//! `T[i][j] = s[i − j + n − 1]`. The output `y = T·x` is accumulated column
//! by column, XOR-ing the seed window of every set input bit into `y` one
//! 64-bit word at a time. Cost is `O(n·m / 64)`.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SymbolSequence;
use crate::rng::{stream, stream_rng};

/// Default security parameter `2⁻⁶⁴`.
pub const DEFAULT_EPSILON: f64 = 1.0 / 18_446_744_073_709_551_616.0;

/// Bits packed little-endian, least significant bit first within a byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitBuffer {
    words: Vec<u64>,
    len: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self {
            words: Vec::new(),
            len: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut b = Self::new();
        for bit in bits {
            b.push(bit);
        }
        b
    }

    /// The first `len` bits of `bytes`.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::InvalidParameter(format!(
                "{len} bits requested from {} bytes",
                bytes.len()
            )));
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &byte) in bytes.iter().take(len.div_ceil(8)).enumerate() {
            words[i / 8] |= u64::from(byte) << (8 * (i % 8));
        }
        let mut b = Self { words, len };
        b.clear_tail();
        Ok(b)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len.div_ceil(8))
            .map(|i| (self.words[i / 8] >> (8 * (i % 8))) as u8)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// Bits `[start, start + len)` as a new buffer.
    pub fn slice(&self, start: usize, len: usize) -> BitBuffer {
        assert!(start + len <= self.len);
        let mut out = BitBuffer::zeros(len);
        for (k, w) in out.words.iter_mut().enumerate() {
            *w = self.word_at(start + 64 * k);
        }
        out.clear_tail();
        out
    }

    /// 64 bits starting at bit `pos`; bits past the end read as 0.
    #[inline]
    fn word_at(&self, pos: usize) -> u64 {
        let w = pos / 64;
        let r = pos % 64;
        let lo = self.words.get(w).copied().unwrap_or(0);
        if r == 0 {
            lo
        } else {
            let hi = self.words.get(w + 1).copied().unwrap_or(0);
            (lo >> r) | (hi << (64 - r))
        }
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl Default for BitBuffer {
    fn default() -> Self {
        Self::new()
    }
}

impl std::ops::BitXor for &BitBuffer {
    type Output = BitBuffer;

    fn bitxor(self, rhs: &BitBuffer) -> BitBuffer {
        assert_eq!(self.len, rhs.len, "length mismatch");
        BitBuffer {
            words: self.words.iter().zip(&rhs.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        }
    }
}

/// Polarisation bit of each symbol: vertical (channels 1, 3) is 0,
/// horizontal (channels 2, 4) is 1.
pub fn marginal_bits(seq: &SymbolSequence) -> BitBuffer {
    BitBuffer::from_bits(seq.symbols.iter().map(|&s| s % 2 == 0))
}

/// `m = ⌊n·h⌋ − 2⌈log₂(1/ε)⌉`.
pub fn output_length(n: usize, h_min: f64, epsilon: f64) -> Result<usize> {
    if !(0.0..=2.0).contains(&h_min) {
        return Err(Error::InvalidParameter(format!("min-entropy {h_min} per symbol")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let m = (n as f64 * h_min).floor() as i64 - 2 * (1.0 / epsilon).log2().ceil() as i64;
    if m < 1 {
        return Err(Error::OutputLengthNonpositive(m));
    }
    Ok(m as usize)
}

/// Seed length `n + m − 1` for the given input and output sizes.
pub fn seed_length(n: usize, m: usize) -> usize {
    n + m - 1
}

/// Pseudorandom Toeplitz seed of `len` bits. Only suitable for testing: a
/// deployed extractor needs seed bits from an independent uniform source.
pub fn generate_seed(len: usize, seed: u64) -> BitBuffer {
    let mut rng = stream_rng(seed, stream::EXTRACTOR_SEED, 0);
    let mut b = BitBuffer::zeros(len);
    for w in &mut b.words {
        *w = rng.random();
    }
    b.clear_tail();
    b
}

/// Multiplies `raw` by the Toeplitz matrix of `seed`.
pub fn toeplitz_hash(raw: &BitBuffer, m: usize, seed: &BitBuffer) -> Result<BitBuffer> {
    let n = raw.len();
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("empty input or output".into()));
    }
    if seed.len() != seed_length(n, m) {
        return Err(Error::InvalidParameter(format!(
            "seed has {} bits, need n + m − 1 = {}",
            seed.len(),
            seed_length(n, m)
        )));
    }
    let mut y = BitBuffer::zeros(m);
    for (wi, &word) in raw.words.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let j = wi * 64 + bits.trailing_zeros() as usize;
            bits &= bits - 1;
            // Column j of T is s[n−1−j .. n−1−j+m].
            let offset = n - 1 - j;
            for (k, yw) in y.words.iter_mut().enumerate() {
                *yw ^= seed.word_at(offset + 64 * k);
            }
        }
    }
    y.clear_tail();
    Ok(y)
}

/// Extracts `m = output_length(n, h, ε)` nearly uniform bits.
pub fn extract(raw: &BitBuffer, h_min: f64, epsilon: f64, seed: &BitBuffer) -> Result<BitBuffer> {
    let m = output_length(raw.len(), h_min, epsilon)?;
    toeplitz_hash(raw, m, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_bit_map() {
        let seq = SymbolSequence::from_symbols(vec![1, 2, 3, 4]).unwrap();
        let b = marginal_bits(&seq);
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![false, true, false, true]);
        assert!(marginal_bits(&SymbolSequence::from_symbols(vec![]).unwrap()).is_empty());
    }

    #[test]
    fn zero_seed_gives_zero_output() {
        let raw = BitBuffer::from_bits([true, false, true, true, false, true, true, true]);
        let m = output_length(8, 1.0, 0.5).unwrap();
        assert_eq!(m, 6);
        let y = extract(&raw, 1.0, 0.5, &BitBuffer::zeros(8 + 6 - 1)).unwrap();
        assert_eq!(y.len(), 6);
        assert_eq!(y.count_ones(), 0);
    }

    #[test]
    fn identity_embedding_copies_prefix() {
        // Only s[n−1] set: T[i][j] = 1 iff i = j.
        let n = 200;
        let m = 90;
        let mut seed = BitBuffer::zeros(n + m - 1);
        seed.set(n - 1, true);
        let raw = BitBuffer::from_bits((0..n).map(|i| (i * 7 + i / 3) % 5 < 2));
        let y = toeplitz_hash(&raw, m, &seed).unwrap();
        assert_eq!(y, raw.slice(0, m));
    }

    #[test]
    fn matches_dense_matrix_product() {
        let n = 70;
        let m = 67;
        let seed = BitBuffer::from_bits((0..n + m - 1).map(|i| (i * i + 3 * i) % 7 < 3));
        let raw = BitBuffer::from_bits((0..n).map(|i| (i * 5 + 1) % 3 == 0));
        let y = toeplitz_hash(&raw, m, &seed).unwrap();
        for i in 0..m {
            let mut acc = false;
            for j in 0..n {
                acc ^= seed.get(i + n - 1 - j) & raw.get(j);
            }
            assert_eq!(y.get(i), acc, "bit {i}");
        }
    }

    #[test]
    fn output_length_law() {
        assert_eq!(output_length(1000, 0.5, DEFAULT_EPSILON).unwrap(), 500 - 128);
        assert!(matches!(
            output_length(100, 0.5, DEFAULT_EPSILON),
            Err(Error::OutputLengthNonpositive(-78))
        ));
        assert!(output_length(10, 0.5, 0.0).is_err());
    }

    #[test]
    fn generated_seed_is_deterministic() {
        let a = generate_seed(130, 5);
        assert_eq!(a.len(), 130);
        assert_eq!(a, generate_seed(130, 5));
        assert_ne!(a, generate_seed(130, 6));
        assert!(a.count_ones() > 30 && a.count_ones() < 100);
    }

    #[test]
    fn seed_length_is_checked() {
        let raw = BitBuffer::zeros(16);
        assert!(toeplitz_hash(&raw, 4, &BitBuffer::zeros(18)).is_err());
    }

    #[test]
    fn byte_round_trip() {
        let b = BitBuffer::from_bits((0..21).map(|i| i % 3 == 0));
        let bytes = b.to_bytes();
        assert_eq!(bytes.len(), 3);
        assert_eq!(bytes[0], 0b0100_1001);
        assert_eq!(BitBuffer::from_bytes(&bytes, 21).unwrap(), b);
        assert!(BitBuffer::from_bytes(&bytes, 25).is_err());
    }
}
