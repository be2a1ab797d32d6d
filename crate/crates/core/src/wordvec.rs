//! Pre-trained, cross-lingually aligned word vectors.
//!
//! Vector files are expected in decreasing corpus-frequency order, so the
//! 1-based position of a word doubles as its frequency rank.

use std::collections::HashMap;
use std::io::BufRead;

use log::warn;

use crate::error::{Error, Result};
use crate::text::{fold_case, TextVectorReader};

/// Offset of the Zipf–Mandelbrot rank/frequency law.
pub const MANDELBROT_OFFSET: f64 = 2.7;

/// Estimated relative frequency of the word at `rank`: `1 / (rank + 2.7)`.
pub fn estimate_frequency(rank: usize) -> Result<f64> {
    if rank < 1 {
        return Err(Error::InvalidArgument("rank must be >= 1".into()));
    }
    Ok(1.0 / (rank as f64 + MANDELBROT_OFFSET))
}

/// Word vectors indexed by case-folded word.
#[derive(Debug, Clone)]
pub struct WordVectorStore {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
    folded_duplicates: usize,
}

impl WordVectorStore {
    /// Reads the text vector format, keeping at most `limit` rows.
    ///
    /// A word repeated verbatim is rejected. Distinct words that collide
    /// after case folding keep their first occurrence; the rest are counted
    /// in [`folded_duplicates`](Self::folded_duplicates).
    pub fn load<R: BufRead>(source: R, limit: Option<usize>) -> Result<Self> {
        if limit == Some(0) {
            return Err(Error::InvalidArgument("limit must be positive".into()));
        }
        let reader = TextVectorReader::new(source)?;
        let dim = reader.dim();
        let total = reader.declared_rows();
        let cap = limit.map_or(total, |l| l.min(total));

        let mut raw_seen: HashMap<String, usize> = HashMap::new();
        let mut store = WordVectorStore {
            dim,
            words: Vec::with_capacity(cap),
            data: Vec::with_capacity(cap * dim),
            index: HashMap::with_capacity(cap),
            folded_duplicates: 0,
        };
        for row in reader.take(cap) {
            let row = row?;
            if raw_seen.insert(row.key.clone(), row.line).is_some() {
                return Err(Error::Duplicate {
                    line: row.line,
                    key: row.key,
                });
            }
            let word = fold_case(&row.key);
            if store.index.contains_key(&word) {
                store.folded_duplicates += 1;
                continue;
            }
            store.index.insert(word.clone(), store.words.len());
            store.words.push(word);
            store.data.extend_from_slice(&row.values);
        }
        if store.folded_duplicates > 0 {
            warn!(
                "dropped {} word vectors that collide after case folding",
                store.folded_duplicates
            );
        }
        Ok(store)
    }

    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut store = WordVectorStore {
            dim,
            words: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
            folded_duplicates: 0,
        };
        for (i, (word, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: vector.len(),
                });
            }
            let word = fold_case(word.as_ref());
            if store.index.contains_key(&word) {
                return Err(Error::Duplicate {
                    line: i + 1,
                    key: word,
                });
            }
            store.index.insert(word.clone(), store.words.len());
            store.words.push(word);
            store.data.extend_from_slice(&vector);
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn folded_duplicates(&self) -> usize {
        self.folded_duplicates
    }

    /// Returns the vector and 1-based rank of `word`, if present.
    pub fn lookup(&self, word: &str) -> Option<(&[f64], usize)> {
        let folded = fold_case(word);
        self.index.get(&folded).map(|&i| (self.vector_at(i), i + 1))
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.lookup(word).map(|(_, r)| r)
    }

    /// Entries in rank order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> + '_ {
        self.words
            .iter()
            .enumerate()
            .map(move |(i, w)| (w.as_str(), self.vector_at(i)))
    }

    fn vector_at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "2 3\nrock 1 0 0\npop 0 1 0\n";

    #[test]
    fn loads_fixture() {
        let store = WordVectorStore::load(FIXTURE.as_bytes(), None).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.dim(), 3);
        assert_eq!(store.rank("rock"), Some(1));
        assert_eq!(store.lookup("rock"), Some((&[1.0, 0.0, 0.0][..], 1)));
        assert_eq!(store.lookup("pop"), Some((&[0.0, 1.0, 0.0][..], 2)));
        assert_eq!(store.lookup("zouk"), None);
    }

    #[test]
    fn limit_truncates() {
        let store = WordVectorStore::load(FIXTURE.as_bytes(), Some(1)).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.lookup("rock").is_some());
        assert!(store.lookup("pop").is_none());
        assert!(WordVectorStore::load(FIXTURE.as_bytes(), Some(0)).is_err());
    }

    #[test]
    fn short_row_names_line() {
        let data = "3 3\nrock 1 0 0\npop 0 1 0\njazz 1 0\n";
        match WordVectorStore::load(data.as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn verbatim_duplicate_rejected() {
        let data = "2 1\nrock 1\nrock 2\n";
        match WordVectorStore::load(data.as_bytes(), None) {
            Err(Error::Duplicate { line, key }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "rock");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn folded_duplicate_dropped() {
        let data = "3 1\nrock 1\nRock 2\npop 3\n";
        let store = WordVectorStore::load(data.as_bytes(), None).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.folded_duplicates(), 1);
        assert_eq!(store.lookup("ROCK"), Some((&[1.0][..], 1)));
        // ranks stay contiguous after the drop
        assert_eq!(store.rank("pop"), Some(2));
    }

    #[test]
    fn lookup_preserves_accents() {
        let data = "1 1\nmúsica 1\n";
        let store = WordVectorStore::load(data.as_bytes(), None).unwrap();
        assert!(store.lookup("Música").is_some());
        assert!(store.lookup("musica").is_none());
    }

    #[test]
    fn frequency_values() {
        assert!((estimate_frequency(1).unwrap() - 1.0 / 3.7).abs() < 1e-15);
        assert!((estimate_frequency(1).unwrap() - 0.270270).abs() < 1e-6);
        assert!((estimate_frequency(10).unwrap() - 0.078740).abs() < 1e-6);
        assert!(estimate_frequency(1).unwrap() > estimate_frequency(2).unwrap());
        assert!(estimate_frequency(0).is_err());
    }
}
