//! Dropout states: fixed-width bit-vectors over the hidden neurons.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// A mask over `N` hidden neurons; bit `i` set means neuron `i` is dropped.
///
/// The Hamming weight is cached. States order by their integer value with
/// neuron 0 as the least significant bit, which coincides with the
/// lexicographic order of their [`hex`](Self::to_hex) keys.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DropoutState {
    words: Vec<u64>,
    len: usize,
    weight: usize,
}

impl DropoutState {
    pub fn zeros(len: usize) -> Self {
        DropoutState {
            words: vec![0; len.div_ceil(64)],
            len,
            weight: 0,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = Self::zeros(len);
        for i in 0..len {
            s.set(i, true);
        }
        s
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut s = Self::zeros(len);
        for &i in indices {
            if i >= len {
                return Err(Error::Shape(format!(
                    "neuron index {i} out of range for {len} hidden neurons"
                )));
            }
            s.set(i, true);
        }
        Ok(s)
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Hamming weight (number of dropped neurons).
    pub fn weight(&self) -> usize {
        self.weight
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        if self.get(i) != value {
            self.flip(i);
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        self.words[i / 64] ^= mask;
        if self.words[i / 64] & mask != 0 {
            self.weight += 1;
        } else {
            self.weight -= 1;
        }
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut s = self.clone();
        s.flip(i);
        s
    }

    pub fn ones_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Lowercase hex of the state's integer value, `ceil(N / 4)` digits,
    /// most significant digit first.
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let word = self.words[d / 16];
            let nibble = (word >> ((d % 16) * 4)) & 0xf;
            out.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        out
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self> {
        let digits = len.div_ceil(4);
        if hex.len() != digits {
            return Err(Error::Shape(format!(
                "state key `{hex}` has {} digits, expected {digits} for {len} neurons",
                hex.len()
            )));
        }
        let mut s = Self::zeros(len);
        for (pos, ch) in hex.chars().rev().enumerate() {
            let nibble = ch
                .to_digit(16)
                .ok_or_else(|| Error::Shape(format!("invalid hex digit `{ch}` in `{hex}`")))?;
            for b in 0..4 {
                if nibble >> b & 1 == 1 {
                    let i = pos * 4 + b;
                    if i >= len {
                        return Err(Error::Shape(format!(
                            "state key `{hex}` sets bit {i} beyond {len} neurons"
                        )));
                    }
                    s.set(i, true);
                }
            }
        }
        Ok(s)
    }
}

impl Ord for DropoutState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len.cmp(&other.len).then_with(|| {
            self.words
                .iter()
                .rev()
                .cmp(other.words.iter().rev())
        })
    }
}

impl PartialOrd for DropoutState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Serialized as its hex key.
impl serde::Serialize for DropoutState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl fmt::Debug for DropoutState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DropoutState({}, hw={})", self.to_hex(), self.weight)
    }
}

impl fmt::Display for DropoutState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
