// SPDX-License-Identifier: Apache-2.0

//! Words over a finite alphabet, Birkhoff sums and stopping-time partitions
//! of the full shift.
//!
//! Symbols are stored zero-based (`0..n`); `Display` prints them one-based,
//! which is how words are usually written down (`12` is `T_1 ∘ T_2`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Budget, Interval};

/// Finite word over the alphabet `{0, …, n-1}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(symbols: Vec<u8>) -> Self {
        Self(symbols)
    }

    /// Builds a word from one-based symbols, checking them against the alphabet.
    pub fn from_one_based(symbols: &[usize], alphabet_size: usize) -> Result<Self> {
        symbols
            .iter()
            .map(|&s| {
                if s == 0 || s > alphabet_size || s > 256 {
                    Err(Error::InvalidInput(format!(
                        "symbol {s} outside the alphabet 1..={alphabet_size}"
                    )))
                } else {
                    Ok((s - 1) as u8)
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<u8> {
        self.0.last().copied()
    }

    /// `ω⁻`: the word with its last symbol removed.
    pub fn parent(&self) -> Option<Word> {
        if self.0.is_empty() {
            None
        } else {
            Some(Self(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, symbol: u8) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(symbol);
        Self(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Self(v)
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn max_symbol(&self) -> Option<u8> {
        self.0.iter().copied().max()
    }
}

impl From<Vec<u8>> for Word {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        let wide = self.0.iter().any(|&s| s >= 9);
        for (i, s) in self.0.iter().enumerate() {
            if wide && i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{}", *s as usize + 1)?;
        }
        Ok(())
    }
}

fn check_alphabet(alphabet_size: usize) -> Result<()> {
    if !(2..=256).contains(&alphabet_size) {
        return Err(Error::InvalidInput(format!(
            "alphabet size must lie in 2..=256, got {alphabet_size}"
        )));
    }
    Ok(())
}

/// Lexicographic odometer over `I^length`.
#[derive(Debug, Clone)]
pub struct WordIter {
    alphabet_size: u16,
    current: Option<Vec<u8>>,
}

impl Iterator for WordIter {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        let cur = self.current.take()?;
        let out = Word(cur.clone());
        let mut next = cur;
        let mut i = next.len();
        loop {
            if i == 0 {
                // wrapped: this was the last word
                return Some(out);
            }
            i -= 1;
            if (next[i] as u16) + 1 < self.alphabet_size {
                next[i] += 1;
                self.current = Some(next);
                return Some(out);
            }
            next[i] = 0;
        }
    }
}

/// Number of words of a given length, or `None` on overflow.
pub fn word_count(alphabet_size: usize, length: usize) -> Option<u64> {
    (alphabet_size as u64).checked_pow(u32::try_from(length).ok()?)
}

/// All `alphabet_size^length` words in lexicographic order.
pub fn enumerate_words(alphabet_size: usize, length: usize, budget: u64) -> Result<WordIter> {
    check_alphabet(alphabet_size)?;
    let needed = word_count(alphabet_size, length).unwrap_or(u64::MAX);
    if needed > budget {
        return Err(Error::budget("word enumeration", needed, budget));
    }
    Ok(WordIter {
        alphabet_size: alphabet_size as u16,
        current: Some(vec![0; length]),
    })
}

/// Potential depending on the first `range()` coordinates of a sequence.
pub trait BlockPotential {
    fn range(&self) -> usize;
    /// Value on a block of exactly `range()` symbols.
    fn eval(&self, block: &[u8]) -> f64;
}

/// Range-1 potential given by a value per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPotential(pub Vec<f64>);

impl BlockPotential for SymbolPotential {
    fn range(&self) -> usize {
        1
    }
    fn eval(&self, block: &[u8]) -> f64 {
        self.0[block[0] as usize]
    }
}

/// Range-2 potential `f(ij)` given as a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPotential(pub Vec<Vec<f64>>);

impl BlockPotential for PairPotential {
    fn range(&self) -> usize {
        2
    }
    fn eval(&self, block: &[u8]) -> f64 {
        self.0[block[0] as usize][block[1] as usize]
    }
}

/// `Σ_{k<|ω|} f(σ^k(ω x))` for the canonical continuation `x = 111…`
/// (symbol `0` repeated), accumulated left to right.
pub fn birkhoff_sum<P: BlockPotential + ?Sized>(f: &P, word: &Word) -> f64 {
    let range = f.range().max(1);
    let syms = word.symbols();
    let mut block = vec![0u8; range];
    let mut sum = 0.0;
    for k in 0..syms.len() {
        for (j, b) in block.iter_mut().enumerate() {
            *b = syms.get(k + j).copied().unwrap_or(0);
        }
        sum += f.eval(&block);
    }
    sum
}

/// Enclosures of sup/inf Birkhoff sums over cylinders.
///
/// `bounds(ω)` must contain `{S_{|ω|} ξ(ωx) : x ∈ I^ℕ}`.
pub trait BirkhoffBounds {
    fn alphabet_size(&self) -> usize;
    fn bounds(&self, word: &[u8]) -> Interval;
}

/// Exact bounds for a locally constant, per-symbol additive potential.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveBounds(pub Vec<f64>);

impl BirkhoffBounds for AdditiveBounds {
    fn alphabet_size(&self) -> usize {
        self.0.len()
    }
    fn bounds(&self, word: &[u8]) -> Interval {
        let s: f64 = word.iter().map(|&i| self.0[i as usize]).sum();
        Interval::point(s)
    }
}

/// Prefix-free, complete set of words: `Γ = {ω : S_ω ξ < threshold ≤ S_{ω⁻} ξ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingPartition {
    pub words: Vec<Word>,
    pub threshold: f64,
}

impl StoppingPartition {
    /// `Σ_{ω∈Γ} Π p_{ω_i}`; equals 1 exactly when Γ is a partition.
    pub fn bernoulli_mass(&self, p: &[f64]) -> f64 {
        crate::numeric::kahan_sum(
            self.words
                .iter()
                .map(|w| w.symbols().iter().map(|&s| p[s as usize]).product::<f64>()),
        )
    }

    /// No word is a proper prefix of another (checked on the sorted list).
    pub fn is_prefix_free(&self) -> bool {
        let mut sorted: Vec<&Word> = self.words.iter().collect();
        sorted.sort();
        sorted
            .windows(2)
            .all(|w| w[0] != w[1] && !w[0].is_prefix_of(w[1]))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Depth-first construction of the stopping partition for `threshold < 0`.
pub fn stopping_partition<B: BirkhoffBounds + ?Sized>(
    xi: &B,
    threshold: f64,
    budget: u64,
) -> Result<StoppingPartition> {
    let n = xi.alphabet_size();
    check_alphabet(n)?;
    if !(threshold < 0.0) {
        return Err(Error::InvalidInput(format!(
            "stopping threshold must be negative, got {threshold}"
        )));
    }
    for s in 0..n as u8 {
        let sup = xi.bounds(&[s]).hi;
        if !(sup < 0.0) {
            return Err(Error::InvalidPotential(format!(
                "sup-Birkhoff value {sup} of symbol {} is not negative",
                s as usize + 1
            )));
        }
    }
    let mut counter = Budget::new(budget);
    let mut out = Vec::new();
    let mut stack: Vec<Vec<u8>> = vec![Vec::new()];
    while let Some(word) = stack.pop() {
        for s in (0..n).rev() {
            counter.charge("stopping partition", 1)?;
            let mut child = word.clone();
            child.push(s as u8);
            if xi.bounds(&child).hi < threshold {
                out.push(Word(child));
            } else {
                stack.push(child);
            }
        }
    }
    out.sort();
    Ok(StoppingPartition {
        words: out,
        threshold,
    })
}
