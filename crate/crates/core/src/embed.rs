//! Word vectors for augmenting spatial keywords with related words.
//!
//! Vectors are either trained here (PPMI co-occurrence factored by a seeded
//! randomized truncated SVD) or loaded from a word2vec-style text file.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("corpus has no words")]
    EmptyCorpus,
    #[error("dimension {dim} exceeds vocabulary size {vocab}")]
    DimTooLarge { dim: usize, vocab: usize },
    #[error("bad vector file header: {0}")]
    BadHeader(String),
    #[error("line {0}: wrong number of components")]
    RowDimMismatch(usize),
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("zero vector for {0:?}")]
    ZeroVector(String),
    #[error("io: {0}")]
    Io(String),
}

impl EmbedError {
    pub fn name(&self) -> &'static str {
        match self {
            EmbedError::EmptyCorpus => "EmptyCorpus",
            EmbedError::DimTooLarge { .. } => "DimTooLarge",
            EmbedError::BadHeader(_) => "BadHeader",
            EmbedError::RowDimMismatch(_) => "RowDimMismatch",
            EmbedError::UnknownWord(_) => "UnknownWord",
            EmbedError::ZeroVector(_) => "ZeroVector",
            EmbedError::Io(_) => "Io",
        }
    }
}

pub const DEFAULT_MIN_SIM: f64 = 0.35;
pub const DEFAULT_NEIGHBORS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingSpace {
    /// Builds a space from `(word, vector)` rows. Later duplicates replace earlier ones.
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        let mut space = EmbeddingSpace {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        };
        for (word, vec) in rows {
            debug_assert_eq!(vec.len(), dim);
            match space.index.get(&word) {
                Some(&i) => space.vectors[i] = vec,
                None => {
                    space.index.insert(word.clone(), space.words.len());
                    space.words.push(word);
                    space.vectors.push(vec);
                }
            }
        }
        space
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

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Cosine similarity of two words.
    pub fn sim(&self, w1: &str, w2: &str) -> Result<f64, EmbedError> {
        let a = self.vector(w1).ok_or_else(|| EmbedError::UnknownWord(w1.into()))?;
        let b = self.vector(w2).ok_or_else(|| EmbedError::UnknownWord(w2.into()))?;
        let (na, nb) = (norm(a), norm(b));
        if na == 0.0 {
            return Err(EmbedError::ZeroVector(w1.into()));
        }
        if nb == 0.0 {
            return Err(EmbedError::ZeroVector(w2.into()));
        }
        Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
    }

    /// Up to `k` nearest words by cosine with `sim >= min_sim`, excluding `word`.
    /// Sorted by similarity descending, then word ascending. Zero vectors are skipped.
    pub fn neighbors(&self, word: &str, k: usize, min_sim: f64) -> Result<Vec<(String, f64)>, EmbedError> {
        let target = self.vector(word).ok_or_else(|| EmbedError::UnknownWord(word.into()))?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let nt = norm(target);
        if nt == 0.0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(String, f64)> = self
            .words
            .iter()
            .zip(&self.vectors)
            .filter(|(w, _)| w.as_str() != word)
            .filter_map(|(w, v)| {
                let nv = norm(v);
                (nv > 0.0).then(|| (w.clone(), (dot(target, v) / (nt * nv)).clamp(-1.0, 1.0)))
            })
            .filter(|(_, s)| *s >= min_sim)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    /// Writes `<count> <dim>` then one `<word> <f1> ... <fdim>` line per word.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.words.len(), self.dim)?;
        for (word, vec) in self.words.iter().zip(&self.vectors) {
            write!(w, "{word}")?;
            for x in vec {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn load_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingSpace, EmbedError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| EmbedError::Io(e.to_string()))?,
        None => return Err(EmbedError::BadHeader("empty file".into())),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match parts.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(EmbedError::BadHeader(header.clone())),
        },
        _ => return Err(EmbedError::BadHeader(header.clone())),
    };
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| EmbedError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line").to_string();
        let vec: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| EmbedError::RowDimMismatch(lineno)))
            .collect::<Result<_, _>>()?;
        if vec.len() != dim || vec.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::RowDimMismatch(lineno));
        }
        rows.push((word, vec));
    }
    Ok(EmbeddingSpace::from_rows(dim, rows))
}

/// Positive PMI over a symmetric co-occurrence window.
///
/// Returns the sorted vocabulary and the dense `V × V` PPMI matrix.
pub fn ppmi_matrix(documents: &[Vec<String>], window: usize) -> (Vec<String>, DMatrix<f64>) {
    let mut vocab: Vec<String> = documents.iter().flatten().cloned().collect();
    vocab.sort();
    vocab.dedup();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let v = vocab.len();
    let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for doc in documents {
        let ids: Vec<usize> = doc.iter().map(|w| index[w.as_str()]).collect();
        for (i, &a) in ids.iter().enumerate() {
            let hi = (i + window + 1).min(ids.len());
            for &b in &ids[i + 1..hi] {
                *counts.entry((a, b)).or_insert(0.0) += 1.0;
                *counts.entry((b, a)).or_insert(0.0) += 1.0;
            }
        }
    }
    let mut row_sum = vec![0.0; v];
    let mut total = 0.0;
    for (&(a, _), &c) in &counts {
        row_sum[a] += c;
        total += c;
    }
    let mut m = DMatrix::zeros(v, v);
    for (&(a, b), &c) in &counts {
        let pmi = (c * total / (row_sum[a] * row_sum[b])).ln();
        if pmi > 0.0 {
            m[(a, b)] = pmi;
        }
    }
    (vocab, m)
}

/// Trains `dim`-dimensional vectors: PPMI factored by randomized SVD,
/// word vectors `U·sqrt(Σ)`.
pub fn train_embeddings(
    documents: &[Vec<String>],
    dim: usize,
    window: usize,
    seed: u64,
) -> Result<EmbeddingSpace, EmbedError> {
    let (vocab, m) = ppmi_matrix(documents, window.max(1));
    let v = vocab.len();
    if v == 0 {
        return Err(EmbedError::EmptyCorpus);
    }
    if dim == 0 || dim > v {
        return Err(EmbedError::DimTooLarge { dim, vocab: v });
    }
    let (u, s) = randomized_svd(&m, dim, seed);
    let rows = vocab.into_iter().enumerate().map(|(i, w)| {
        let vec: Vec<f64> = (0..dim).map(|j| u[(i, j)] * s[j].sqrt()).collect();
        (w, vec)
    });
    Ok(EmbeddingSpace::from_rows(dim, rows))
}

/// Top-`rank` left singular vectors and values via subspace iteration from a
/// seeded Gaussian test matrix.
fn randomized_svd(m: &DMatrix<f64>, rank: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let n = m.nrows();
    let sketch = (rank + 10).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(m.ncols(), sketch, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (m * omega).qr().q();
    for _ in 0..4 {
        q = (m.transpose() * &q).qr().q();
        q = (m * &q).qr().q();
    }
    let b = q.transpose() * m;
    let svd = b.svd(true, false);
    let u_small = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let u_full = q * u_small;
    let mut u = DMatrix::zeros(n, rank);
    let mut s = Vec::with_capacity(rank);
    for (j, &col) in order.iter().take(rank).enumerate() {
        let mut c = u_full.column(col).clone_owned();
        // Fix the sign: largest-magnitude component positive.
        let pivot = c.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            c = -c;
        }
        u.set_column(j, &c);
        s.push(svd.singular_values[col]);
    }
    (u, s)
}
