//! Coalitions of players as fixed-width bitsets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// A subset of the players `0..n`.
///
/// Set semantics are structural: a player is either in the bitset or not, so
/// duplicates cannot be represented and `{0, 1} == {1, 0}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    n: usize,
    words: Vec<u64>,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self { n, words: vec![0; n.div_ceil(WORD_BITS)] }
    }

    /// The grand coalition of all `n` players.
    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for (w, word) in c.words.iter_mut().enumerate() {
            let remaining = n - w * WORD_BITS;
            *word = if remaining >= WORD_BITS { u64::MAX } else { (1u64 << remaining) - 1 };
        }
        c
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut c = Self::empty(n);
        for &i in members {
            if i >= n {
                return Err(Error::Domain(alloc::format!("player {i} out of range for n = {n}")));
            }
            c.insert(i);
        }
        Ok(c)
    }

    /// Builds the coalition whose bitset equals `mask`; requires `n <= 64`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        debug_assert!(n <= WORD_BITS);
        debug_assert!(n == WORD_BITS || mask >> n == 0);
        let mut c = Self::empty(n);
        if let Some(w) = c.words.first_mut() {
            *w = mask;
        }
        c
    }

    /// Number of players in the game this coalition belongs to.
    pub fn players(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    /// Adds player `i`. Panics if `i >= n`.
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "player {i} out of range for n = {}", self.n);
        self.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
    }

    /// Removes player `i`. Panics if `i >= n`.
    pub fn remove(&mut self, i: usize) {
        assert!(i < self.n, "player {i} out of range for n = {}", self.n);
        self.words[i / WORD_BITS] &= !(1 << (i % WORD_BITS));
    }

    pub fn with(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.insert(i);
        c
    }

    pub fn without(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.remove(i);
        c
    }

    /// Members in ascending index order.
    pub fn members(&self) -> Members<'_> {
        Members { words: &self.words, word: 0, current: self.words.first().copied().unwrap_or(0) }
    }

    /// The bitset as a single word, for games with at most 64 players.
    pub fn mask(&self) -> Option<u64> {
        match self.words.len() {
            0 => Some(0),
            1 => Some(self.words[0]),
            _ => None,
        }
    }

    /// Canonical lowercase hex: the little-endian bytes of the bitset words,
    /// truncated to `ceil(n / 8)` bytes.
    pub fn to_hex(&self) -> String {
        const DIGITS: &[u8; 16] = b"0123456789abcdef";
        let nbytes = self.n.div_ceil(8);
        let mut out = String::with_capacity(nbytes * 2);
        for b in 0..nbytes {
            let byte = (self.words[b / 8] >> ((b % 8) * 8)) as u8;
            out.push(DIGITS[(byte >> 4) as usize] as char);
            out.push(DIGITS[(byte & 0xf) as usize] as char);
        }
        out
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self> {
        let nbytes = n.div_ceil(8);
        if hex.len() != nbytes * 2 {
            return Err(Error::Invalid(alloc::format!(
                "coalition hex {hex:?} has length {}, expected {} for n = {n}",
                hex.len(),
                nbytes * 2
            )));
        }
        let mut c = Self::empty(n);
        let bytes = hex.as_bytes();
        for b in 0..nbytes {
            let hi = hex_digit(bytes[2 * b]);
            let lo = hex_digit(bytes[2 * b + 1]);
            let (Some(hi), Some(lo)) = (hi, lo) else {
                return Err(Error::Invalid(alloc::format!("coalition hex {hex:?} is not lowercase hex")));
            };
            c.words[b / 8] |= u64::from(hi << 4 | lo) << ((b % 8) * 8);
        }
        if c.words.iter().enumerate().any(|(w, &word)| {
            let remaining = n - w * WORD_BITS;
            remaining < WORD_BITS && word >> remaining != 0
        }) {
            return Err(Error::Invalid(alloc::format!("coalition hex {hex:?} sets bits beyond n = {n}")));
        }
        Ok(c)
    }
}

fn hex_digit(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        _ => None,
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub struct Members<'a> {
    words: &'a [u64],
    word: usize,
    current: u64,
}

impl Iterator for Members<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.word * WORD_BITS + bit);
            }
            self.word += 1;
            self.current = *self.words.get(self.word)?;
        }
    }
}
