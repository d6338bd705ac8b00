//! Character k-gram shingling, Jaccard distance and dense pairwise distance
//! matrices.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::corpus::DiversitySource;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("empty document{}", .id.as_ref().map(|i| format!(" for test `{i}`")).unwrap_or_default())]
    EmptyDocument { id: Option<String> },
    #[error("need at least 2 tests, got {0}")]
    TooFewTests(usize),
    #[error("shingle length must be at least 1")]
    InvalidK,
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("test `{0}` is not in the matrix")]
    UnknownId(String),
    #[error("cannot build worker pool: {0}")]
    Workers(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShingleConfig {
    /// Characters per shingle.
    pub k: usize,
}

impl Default for ShingleConfig {
    fn default() -> Self {
        ShingleConfig { k: 5 }
    }
}

impl ShingleConfig {
    pub fn new(k: usize) -> Result<Self, SimilarityError> {
        if k == 0 {
            return Err(SimilarityError::InvalidK);
        }
        Ok(ShingleConfig { k })
    }
}

/// The set of k-grams of one document. Never empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShingleSet {
    shingles: BTreeSet<String>,
    source_len: usize,
}

impl ShingleSet {
    pub fn shingles(&self) -> &BTreeSet<String> {
        &self.shingles
    }

    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Character count of the text the set was built from.
    pub fn source_len(&self) -> usize {
        self.source_len
    }
}

/// Byte offsets of every k-character window of `text`, stride 1. A text
/// shorter than `k` characters yields the whole text as its single window.
fn windows(text: &str, k: usize) -> impl Iterator<Item = &str> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let chars = bounds.len() - 1;
    let count = if chars < k { 1 } else { chars - k + 1 };
    let span = k.min(chars);
    (0..count).map(move |i| &text[bounds[i]..bounds[i + span]])
}

pub fn shingle(text: &str, cfg: ShingleConfig) -> Result<ShingleSet, SimilarityError> {
    if cfg.k == 0 {
        return Err(SimilarityError::InvalidK);
    }
    if text.is_empty() {
        return Err(SimilarityError::EmptyDocument { id: None });
    }
    Ok(ShingleSet {
        shingles: windows(text, cfg.k).map(str::to_owned).collect(),
        source_len: text.chars().count(),
    })
}

fn distance_from_counts(intersection: usize, union: usize) -> f64 {
    1.0 - intersection as f64 / union as f64
}

/// `1 - |a ∩ b| / |a ∪ b|`.
pub fn jaccard_distance(a: &ShingleSet, b: &ShingleSet) -> f64 {
    let mut left = a.shingles.iter().peekable();
    let mut right = b.shingles.iter().peekable();
    let mut intersection = 0;
    while let (Some(x), Some(y)) = (left.peek(), right.peek()) {
        match x.cmp(y) {
            std::cmp::Ordering::Less => {
                left.next();
            }
            std::cmp::Ordering::Greater => {
                right.next();
            }
            std::cmp::Ordering::Equal => {
                intersection += 1;
                left.next();
                right.next();
            }
        }
    }
    let union = a.len() + b.len() - intersection;
    distance_from_counts(intersection, union)
}

/// Shingle sets over a shared vocabulary, each stored as sorted ids.
fn intern_all(texts: &[&str], k: usize) -> Vec<Vec<u32>> {
    let mut vocab: HashMap<&str, u32> = HashMap::new();
    texts
        .iter()
        .map(|text| {
            let mut ids: Vec<u32> = windows(text, k)
                .map(|w| {
                    let next = vocab.len() as u32;
                    *vocab.entry(w).or_insert(next)
                })
                .collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect()
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Symmetric, zero-diagonal matrix of normalized distances between tests.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    d: Vec<f64>,
    source: DiversitySource,
    k: usize,
}

impl DistanceMatrix {
    /// Validates and wraps explicit rows.
    pub fn from_rows(
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        source: DiversitySource,
        k: usize,
    ) -> Result<Self, SimilarityError> {
        let n = ids.len();
        if n < 2 {
            return Err(SimilarityError::TooFewTests(n));
        }
        if let Some(dup) = crate::corpus::duplicates(&ids).first() {
            return Err(SimilarityError::InvalidMatrix(format!("duplicate id `{dup}`")));
        }
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(SimilarityError::InvalidMatrix(format!("expected {n}x{n} rows")));
        }
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(SimilarityError::InvalidMatrix(format!("d[{i}][{i}] is not 0")));
            }
            for j in 0..n {
                let v = rows[i][j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(SimilarityError::InvalidMatrix(format!(
                        "d[{i}][{j}] = {v} is outside [0, 1]"
                    )));
                }
                if v != rows[j][i] {
                    return Err(SimilarityError::InvalidMatrix(format!(
                        "d[{i}][{j}] != d[{j}][{i}]"
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            ids,
            d: rows.into_iter().flatten().collect(),
            source,
            k,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn source(&self) -> DiversitySource {
        self.source
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.d[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// The matrix restricted to `ids`, in the given order.
    pub fn submatrix<S: AsRef<str>>(&self, ids: &[S]) -> Result<DistanceMatrix, SimilarityError> {
        let positions: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let idx = ids
            .iter()
            .map(|id| {
                positions
                    .get(id.as_ref())
                    .copied()
                    .ok_or_else(|| SimilarityError::UnknownId(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if idx.len() < 2 {
            return Err(SimilarityError::TooFewTests(idx.len()));
        }
        let owned: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
        if let Some(dup) = crate::corpus::duplicates(&owned).first() {
            return Err(SimilarityError::InvalidMatrix(format!("duplicate id `{dup}`")));
        }
        let mut d = Vec::with_capacity(idx.len() * idx.len());
        for &i in &idx {
            d.extend(idx.iter().map(|&j| self.get(i, j)));
        }
        Ok(DistanceMatrix {
            ids: owned,
            d,
            source: self.source,
            k: self.k,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }
}

impl Serialize for DistanceMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DistanceMatrix", 4)?;
        s.serialize_field("ids", &self.ids)?;
        s.serialize_field("source", &self.source)?;
        s.serialize_field("k", &self.k)?;
        s.serialize_field("d", &self.to_rows())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for DistanceMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            ids: Vec<String>,
            source: DiversitySource,
            k: usize,
            d: Vec<Vec<f64>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        DistanceMatrix::from_rows(raw.ids, raw.d, raw.source, raw.k)
            .map_err(serde::de::Error::custom)
    }
}

/// Builds the distance matrix over `docs` (test id, normalized text) using
/// rayon's global pool.
pub fn build_distance_matrix(
    docs: &[(String, String)],
    cfg: ShingleConfig,
    source: DiversitySource,
) -> Result<DistanceMatrix, SimilarityError> {
    build_distance_matrix_with(docs, cfg, source, None)
}

/// As [`build_distance_matrix`], on a dedicated pool of `workers` threads
/// when given. Every pair lands in a fixed slot, so the result does not
/// depend on the worker count.
pub fn build_distance_matrix_with(
    docs: &[(String, String)],
    cfg: ShingleConfig,
    source: DiversitySource,
    workers: Option<usize>,
) -> Result<DistanceMatrix, SimilarityError> {
    if cfg.k == 0 {
        return Err(SimilarityError::InvalidK);
    }
    let n = docs.len();
    if n < 2 {
        return Err(SimilarityError::TooFewTests(n));
    }
    if let Some((id, _)) = docs.iter().find(|(_, text)| text.is_empty()) {
        return Err(SimilarityError::EmptyDocument {
            id: Some(id.clone()),
        });
    }
    let ids: Vec<String> = docs.iter().map(|(id, _)| id.clone()).collect();
    if let Some(dup) = crate::corpus::duplicates(&ids).first() {
        return Err(SimilarityError::InvalidMatrix(format!("duplicate id `{dup}`")));
    }

    let texts: Vec<&str> = docs.iter().map(|(_, t)| t.as_str()).collect();
    let sets = intern_all(&texts, cfg.k);

    let compute = || -> Vec<Vec<f64>> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| {
                        let inter = sorted_intersection(&sets[i], &sets[j]);
                        distance_from_counts(inter, sets[i].len() + sets[j].len() - inter)
                    })
                    .collect()
            })
            .collect()
    };
    let upper = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| SimilarityError::Workers(e.to_string()))?
            .install(compute),
        None => compute(),
    };

    let mut d = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix {
        ids,
        d,
        source,
        k: cfg.k,
    })
}
