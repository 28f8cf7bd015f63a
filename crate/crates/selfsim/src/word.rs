//! Finite words over the map alphabet `{1, ..., N}`.
//!
//! Letters are stored zero-based; `Display` and serialization use the
//! one-based convention. The empty word denotes the identity composition.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A finite word indexing a cylinder of the attractor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds a word from one-based letters, as written in input files.
    pub fn from_one_based(letters: &[usize]) -> Self {
        Word(letters.iter().map(|&l| (l - 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Word extended by one (zero-based) letter.
    pub fn child(&self, letter: u8) -> Word {
        let mut v = self.0.clone();
        v.push(letter);
        Word(v)
    }

    /// Concatenation `self . other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{}", l + 1)?;
        }
        Ok(())
    }
}

/// Iterates all words of the given length in lexicographic (depth-first)
/// order, the order used everywhere enumeration matters for determinism.
pub fn words_of_length(n_maps: usize, len: usize) -> WordIter {
    WordIter {
        n: n_maps as u8,
        current: Some(vec![0; len]),
    }
}

pub struct WordIter {
    n: u8,
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
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] + 1 < self.n {
                next[i] += 1;
                for slot in next.iter_mut().skip(i + 1) {
                    *slot = 0;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let all: Vec<Word> = words_of_length(2, 2).collect();
        assert_eq!(
            all,
            vec![
                Word(vec![0, 0]),
                Word(vec![0, 1]),
                Word(vec![1, 0]),
                Word(vec![1, 1]),
            ]
        );
        assert_eq!(words_of_length(3, 4).count(), 81);
    }

    #[test]
    fn empty_word_is_single() {
        let all: Vec<Word> = words_of_length(5, 0).collect();
        assert_eq!(all, vec![Word::empty()]);
    }

    #[test]
    fn display_uses_one_based_letters() {
        assert_eq!(Word(vec![1, 0]).to_string(), "2.1");
        assert_eq!(Word::empty().to_string(), "∅");
    }
}
