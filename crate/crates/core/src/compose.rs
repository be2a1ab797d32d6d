//! Initial concept embeddings from word vectors.
//!
//! Two composition functions are provided: a plain average of the token
//! vectors, and smooth-inverse-frequency weighting followed by removal of
//! the common component shared by all concepts.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use log::debug;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::text::{write_text_vectors, TextVectorReader};
use crate::wordvec::{estimate_frequency, WordVectorStore};

/// Default SIF smoothing parameter.
pub const DEFAULT_SIF_A: f64 = 1e-3;

const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1000;

/// Characters escaped in concept ids when written to the space-separated
/// text format.
const ID_ESCAPE: &AsciiSet = &CONTROLS.add(b' ').add(b'%');

/// Anything that can resolve a token of a given language to a vector and
/// its frequency rank.
pub trait WordSource: Sync {
    fn dim(&self) -> usize;
    fn lookup(&self, lang: &str, word: &str) -> Option<(&[f64], usize)>;
}

impl WordSource for WordVectorStore {
    fn dim(&self) -> usize {
        WordVectorStore::dim(self)
    }

    fn lookup(&self, _lang: &str, word: &str) -> Option<(&[f64], usize)> {
        WordVectorStore::lookup(self, word)
    }
}

/// One aligned vector store per language code.
#[derive(Debug, Default)]
pub struct MultilingualVectors {
    stores: BTreeMap<String, WordVectorStore>,
}

impl MultilingualVectors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lang: impl Into<String>, store: WordVectorStore) -> Result<()> {
        if let Some(existing) = self.stores.values().next() {
            if existing.dim() != store.dim() {
                return Err(Error::DimensionMismatch {
                    expected: existing.dim(),
                    actual: store.dim(),
                });
            }
        }
        self.stores.insert(lang.into(), store);
        Ok(())
    }

    pub fn get(&self, lang: &str) -> Option<&WordVectorStore> {
        self.stores.get(lang)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.stores.keys().map(String::as_str)
    }
}

impl WordSource for MultilingualVectors {
    fn dim(&self) -> usize {
        self.stores.values().next().map_or(0, WordVectorStore::dim)
    }

    fn lookup(&self, lang: &str, word: &str) -> Option<(&[f64], usize)> {
        self.stores.get(lang)?.lookup(word)
    }
}

/// The token sequence of one concept (graph node).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptTokens {
    pub id: String,
    pub lang: String,
    pub tokens: Vec<String>,
}

impl ConceptTokens {
    pub fn new(id: impl Into<String>, lang: impl Into<String>, tokens: Vec<String>) -> Self {
        ConceptTokens {
            id: id.into(),
            lang: lang.into(),
            tokens,
        }
    }
}

/// Per-concept embeddings plus a flag telling whether any constituent word
/// was found in the word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEmbeddingMatrix {
    concepts: Vec<String>,
    vectors: Array2<f64>,
    known: Vec<bool>,
    index: HashMap<String, usize>,
}

impl ConceptEmbeddingMatrix {
    pub fn new(concepts: Vec<String>, vectors: Array2<f64>, known: Vec<bool>) -> Result<Self> {
        if vectors.nrows() != concepts.len() {
            return Err(Error::DimensionMismatch {
                expected: concepts.len(),
                actual: vectors.nrows(),
            });
        }
        if known.len() != concepts.len() {
            return Err(Error::DimensionMismatch {
                expected: concepts.len(),
                actual: known.len(),
            });
        }
        let mut index = HashMap::with_capacity(concepts.len());
        for (i, id) in concepts.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Duplicate {
                    line: i + 1,
                    key: id.clone(),
                });
            }
        }
        Ok(ConceptEmbeddingMatrix {
            concepts,
            vectors,
            known,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn get(&self, id: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(id).map(|i| self.vectors.row(i))
    }

    pub fn is_known(&self, id: &str) -> Option<bool> {
        self.index_of(id).map(|i| self.known[i])
    }

    /// Same concepts and flags, new vectors.
    pub fn with_vectors(&self, vectors: Array2<f64>, known: Vec<bool>) -> Result<Self> {
        if vectors.dim() != self.vectors.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.vectors.nrows(),
                actual: vectors.nrows(),
            });
        }
        Self::new(self.concepts.clone(), vectors, known)
    }

    /// Writes the matrix in the word-vector text format, one row per
    /// concept. Spaces, `%` and control characters in ids are
    /// percent-encoded.
    pub fn write_text<W: Write>(&self, out: W) -> Result<()> {
        let keys: Vec<String> = self
            .concepts
            .iter()
            .map(|c| utf8_percent_encode(c, ID_ESCAPE).to_string())
            .collect();
        let rows = keys.iter().enumerate().map(|(i, k)| {
            let row = self.vectors.row(i);
            (k.as_str(), row.to_slice().expect("standard layout"))
        });
        write_text_vectors(out, self.dim(), rows)
    }

    /// Reads a matrix written by [`write_text`](Self::write_text), decoding
    /// ids. A concept counts as known iff its vector is nonzero.
    pub fn read_text<R: BufRead>(source: R) -> Result<Self> {
        let reader = TextVectorReader::new(source)?;
        let dim = reader.dim();
        let mut concepts = Vec::with_capacity(reader.declared_rows());
        let mut data = Vec::with_capacity(reader.declared_rows() * dim);
        for row in reader {
            let row = row?;
            let id = percent_decode_str(&row.key)
                .decode_utf8()
                .map_err(|_| Error::parse(row.line, "id is not valid UTF-8"))?
                .into_owned();
            concepts.push(id);
            data.extend(row.values);
        }
        let vectors = Array2::from_shape_vec((concepts.len(), dim), data)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let known = vectors
            .rows()
            .into_iter()
            .map(|r| r.iter().any(|&x| x != 0.0))
            .collect();
        Self::new(concepts, vectors, known)
    }
}

/// Mean of the token vectors; out-of-vocabulary tokens contribute the zero
/// vector but still count in the denominator.
pub fn compose_avg<S: WordSource>(concepts: &[ConceptTokens], source: &S) -> Result<ConceptEmbeddingMatrix> {
    let dim = check_inputs(concepts, source)?;
    let rows: Vec<(Vec<f64>, bool)> = concepts
        .par_iter()
        .map(|c| {
            // Running mean: exact when every token has the same vector.
            let mut mean = vec![0.0; dim];
            let mut known = false;
            for (seen, token) in c.tokens.iter().enumerate() {
                let n = (seen + 1) as f64;
                match source.lookup(&c.lang, token) {
                    Some((v, _)) => {
                        known = true;
                        for (m, x) in mean.iter_mut().zip(v) {
                            *m += (x - *m) / n;
                        }
                    }
                    None => mean.iter_mut().for_each(|m| *m -= *m / n),
                }
            }
            (mean, known)
        })
        .collect();
    assemble(concepts, dim, rows)
}

/// SIF weight `a / (a + f)` of a word at the given frequency rank.
pub fn sif_weight(a: f64, rank: usize) -> Result<f64> {
    if a.is_nan() || a <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sif parameter a must be > 0, got {a}"
        )));
    }
    Ok(a / (a + estimate_frequency(rank)?))
}

/// SIF-weighted averages of in-vocabulary tokens, before common-component
/// removal. Concepts without any in-vocabulary token get the zero vector.
pub fn sif_weighted_average<S: WordSource>(
    concepts: &[ConceptTokens],
    source: &S,
    a: f64,
) -> Result<ConceptEmbeddingMatrix> {
    let dim = check_inputs(concepts, source)?;
    sif_weight(a, 1)?;
    let rows: Vec<(Vec<f64>, bool)> = concepts
        .par_iter()
        .map(|c| {
            let mut sum = vec![0.0; dim];
            let mut m = 0usize;
            for token in &c.tokens {
                if let Some((v, rank)) = source.lookup(&c.lang, token) {
                    let f = estimate_frequency(rank).expect("store ranks are 1-based");
                    let w = a / (a + f);
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += w * x;
                    }
                    m += 1;
                }
            }
            if m > 0 {
                let m = m as f64;
                sum.iter_mut().for_each(|s| *s /= m);
            }
            (sum, m > 0)
        })
        .collect();
    assemble(concepts, dim, rows)
}

/// SIF composition: weighted average, then projection of every known row
/// onto the orthogonal complement of the leading singular direction of the
/// known rows.
pub fn compose_sif<S: WordSource>(
    concepts: &[ConceptTokens],
    source: &S,
    a: f64,
) -> Result<ConceptEmbeddingMatrix> {
    let averaged = sif_weighted_average(concepts, source, a)?;
    let known_rows: Vec<usize> = (0..averaged.len()).filter(|&i| averaged.known[i]).collect();
    if known_rows.len() < 2 {
        return Err(Error::TooFewKnown {
            needed: 2,
            have: known_rows.len(),
        });
    }
    let known_matrix = averaged.vectors.select(Axis(0), &known_rows);
    let u = leading_direction(known_matrix.view());
    let mut vectors = averaged.vectors.clone();
    for &i in &known_rows {
        let mut row = vectors.row_mut(i);
        let proj = row.dot(&u);
        row.scaled_add(-proj, &u);
    }
    averaged.with_vectors(vectors, averaged.known.clone())
}

/// Unit vector `u` maximizing `‖X u‖`, i.e. the leading right singular
/// vector of `X` (rows are observations).
///
/// Power iteration on `XᵀX` from the normalized all-ones vector. The sign is
/// fixed so that the largest-magnitude component is positive.
pub fn leading_direction(rows: ArrayView2<'_, f64>) -> Array1<f64> {
    let d = rows.ncols();
    let gram = rows.t().dot(&rows);

    let mut starts =
        std::iter::once(Array1::from_elem(d, 1.0 / (d as f64).sqrt())).chain((0..d).map(|k| unit(d, k)));
    let mut v = loop {
        match starts.next() {
            Some(start) => {
                let next = gram.dot(&start);
                let norm = next.dot(&next).sqrt();
                if norm > 0.0 {
                    break next / norm;
                }
            }
            // XᵀX = 0: every direction is leading.
            None => return fix_sign(unit(d, 0)),
        }
    };

    let mut converged = false;
    for iter in 0..POWER_MAX_ITERS {
        let next = gram.dot(&v);
        let norm = next.dot(&next).sqrt();
        let next = next / norm;
        let diff = (&next - &v).mapv(|x| x * x).sum().sqrt();
        v = next;
        if diff <= POWER_TOLERANCE {
            debug!("power iteration converged after {} iterations", iter + 1);
            converged = true;
            break;
        }
    }
    if !converged {
        debug!("power iteration hit the {POWER_MAX_ITERS} iteration cap");
    }
    fix_sign(v)
}

fn unit(d: usize, k: usize) -> Array1<f64> {
    let mut e = Array1::zeros(d);
    if k < d {
        e[k] = 1.0;
    }
    e
}

fn fix_sign(mut v: Array1<f64>) -> Array1<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    v
}

fn check_inputs<S: WordSource>(concepts: &[ConceptTokens], source: &S) -> Result<usize> {
    if let Some(c) = concepts.iter().find(|c| c.tokens.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "concept `{}` has no tokens",
            c.id
        )));
    }
    match source.dim() {
        0 => Err(Error::InvalidArgument("word source has no vectors".into())),
        d => Ok(d),
    }
}

fn assemble(
    concepts: &[ConceptTokens],
    dim: usize,
    rows: Vec<(Vec<f64>, bool)>,
) -> Result<ConceptEmbeddingMatrix> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    let mut known = Vec::with_capacity(rows.len());
    for (v, k) in rows {
        data.extend(v);
        known.push(k);
    }
    let vectors = Array2::from_shape_vec((concepts.len(), dim), data)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    ConceptEmbeddingMatrix::new(concepts.iter().map(|c| c.id.clone()).collect(), vectors, known)
}
