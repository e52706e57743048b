//! Weighted n-gram feature vectors, training matrices, the spectrum kernel
//! and feature coverage.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, Sentence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Space-joined n-grams of exactly length `p`, in sentence order.
pub fn ngram_keys(tokens: &[String], p: usize) -> impl Iterator<Item = String> + '_ {
    let count = if p == 0 || tokens.len() < p {
        0
    } else {
        tokens.len() - p + 1
    };
    (0..count).map(move |i| tokens[i..i + p].join(" "))
}

/// Occurrence counts of all n-grams of length `1..=order`, with their length.
pub fn ngram_counts(tokens: &[String], order: usize) -> BTreeMap<String, (usize, usize)> {
    let mut out = BTreeMap::new();
    for p in 1..=order {
        for key in ngram_keys(tokens, p) {
            out.entry(key).or_insert((p, 0)).1 += 1;
        }
    }
    out
}

/// Distinct n-gram keys of length `1..=order` over a set of sentences.
pub fn feature_set<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, order: usize) -> HashSet<String> {
    let mut out = HashSet::new();
    for s in sentences {
        for p in 1..=order {
            out.extend(ngram_keys(&s.tokens, p));
        }
    }
    out
}

/// Distinct n-gram keys of exactly length `p` over a set of sentences.
pub fn feature_set_of_order<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, p: usize) -> HashSet<String> {
    let mut out = HashSet::new();
    for s in sentences {
        out.extend(ngram_keys(&s.tokens, p));
    }
    out
}

/// How an n-gram of length `p` occurring `c` times is valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `p * c`, the weighting of the n-spectrum weighted word kernel.
    #[default]
    Spectrum,
    /// Raw count `c`.
    Count,
}

impl Weighting {
    pub fn value(self, p: usize, count: usize) -> f64 {
        match self {
            Weighting::Spectrum => (p * count) as f64,
            Weighting::Count => count as f64,
        }
    }
}

// ---------------------------------------------------------------------------
// Sparse vectors
// ---------------------------------------------------------------------------

/// Sparse real vector keyed by column id. Never stores zeros or non-finite
/// values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<T> {
    entries: BTreeMap<usize, T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn new() -> Self {
        SparseVector {
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (usize, T)>) -> Self {
        let mut v = Self::new();
        for (k, x) in entries {
            v.add(k, x);
        }
        v
    }

    /// Adds `x` to entry `k`; entries that become zero are removed.
    pub fn add(&mut self, k: usize, x: T) {
        assert!(x.is_finite(), "non-finite value for column {k}");
        let e = self.entries.entry(k).or_insert_with(T::zero);
        *e += x;
        if e.is_zero() {
            self.entries.remove(&k);
        }
    }

    pub fn get(&self, k: usize) -> T {
        self.entries.get(&k).copied().unwrap_or_else(T::zero)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn dot(&self, other: &SparseVector<T>) -> T {
        let (small, large) = if self.nnz() <= other.nnz() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .filter_map(|(k, a)| large.entries.get(k).map(|b| *a * *b))
            .sum()
    }

    pub fn scaled(&self, a: T) -> Self {
        Self::from_entries(self.iter().map(|(k, v)| (k, v * a)))
    }

    pub fn plus(&self, other: &SparseVector<T>) -> Self {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.add(k, v);
        }
        out
    }

    pub fn max_value(&self) -> Option<T> {
        self.entries.values().copied().reduce(T::max)
    }
}

// ---------------------------------------------------------------------------
// Feature index
// ---------------------------------------------------------------------------

/// Bijection between n-gram keys and dense column ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureIndex {
    order_max: usize,
    weighting: Weighting,
    feature_to_col: HashMap<String, usize>,
    col_to_feature: Vec<String>,
    col_order: Vec<usize>,
}

/// Result of extracting against a frozen index.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction<T> {
    pub vector: SparseVector<T>,
    /// Distinct n-grams of the sentence missing from the index.
    pub skipped: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    col: usize,
    n: usize,
    feature: String,
}

impl FeatureIndex {
    pub fn new(order_max: usize, weighting: Weighting) -> Self {
        assert!(order_max >= 1, "feature order must be at least 1");
        FeatureIndex {
            order_max,
            weighting,
            feature_to_col: HashMap::new(),
            col_to_feature: Vec::new(),
            col_order: Vec::new(),
        }
    }

    pub fn order_max(&self) -> usize {
        self.order_max
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn len(&self) -> usize {
        self.col_to_feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col_to_feature.is_empty()
    }

    pub fn col(&self, feature: &str) -> Option<usize> {
        self.feature_to_col.get(feature).copied()
    }

    pub fn feature(&self, col: usize) -> &str {
        &self.col_to_feature[col]
    }

    /// Number of tokens in the feature at `col`.
    pub fn order_of(&self, col: usize) -> usize {
        self.col_order[col]
    }

    pub fn features(&self) -> impl Iterator<Item = (usize, &str)> {
        self.col_to_feature.iter().enumerate().map(|(i, f)| (i, f.as_str()))
    }

    /// Id of `feature`, appending it if absent.
    pub fn intern(&mut self, feature: &str, order: usize) -> usize {
        if let Some(&c) = self.feature_to_col.get(feature) {
            return c;
        }
        let c = self.col_to_feature.len();
        self.feature_to_col.insert(feature.to_string(), c);
        self.col_to_feature.push(feature.to_string());
        self.col_order.push(order);
        c
    }

    /// Frozen-mode extraction: unseen n-grams are skipped and counted.
    pub fn extract<T: Scalar>(&self, sentence: &Sentence) -> Extraction<T> {
        let mut vector = SparseVector::new();
        let mut skipped = 0;
        for (key, (p, count)) in ngram_counts(&sentence.tokens, self.order_max) {
            match self.col(&key) {
                Some(c) => vector.add(c, T::lit(self.weighting.value(p, count))),
                None => skipped += 1,
            }
        }
        Extraction { vector, skipped }
    }

    /// Growing-mode extraction: unseen n-grams are appended in first-seen
    /// order (shorter n-grams first, then sentence position).
    pub fn extract_growing<T: Scalar>(&mut self, sentence: &Sentence) -> SparseVector<T> {
        let mut vector = SparseVector::new();
        for p in 1..=self.order_max {
            let mut counts: Vec<(String, usize)> = Vec::new();
            let mut seen: HashMap<String, usize> = HashMap::new();
            for key in ngram_keys(&sentence.tokens, p) {
                match seen.get(&key) {
                    Some(&i) => counts[i].1 += 1,
                    None => {
                        seen.insert(key.clone(), counts.len());
                        counts.push((key, 1));
                    }
                }
            }
            for (key, count) in counts {
                let c = self.intern(&key, p);
                vector.add(c, T::lit(self.weighting.value(p, count)));
            }
        }
        vector
    }

    /// JSON lines of `{"col", "n", "feature"}` in column order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (col, feature) in self.col_to_feature.iter().enumerate() {
            let line = IndexLine {
                col,
                n: self.col_order[col],
                feature: feature.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("index line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, weighting: Weighting) -> Result<Self> {
        let mut lines = Vec::new();
        for l in text.lines().filter(|l| !l.trim().is_empty()) {
            lines.push(serde_json::from_str::<IndexLine>(l)?);
        }
        let order = lines.iter().map(|l| l.n).max().unwrap_or(1);
        let mut idx = FeatureIndex::new(order, weighting);
        for (i, l) in lines.iter().enumerate() {
            if l.col != i {
                return Err(Error::InvalidArgument(format!("column ids not dense at line {}", i + 1)));
            }
            idx.intern(&l.feature, l.n);
        }
        Ok(idx)
    }
}

// ---------------------------------------------------------------------------
// Spectrum kernel
// ---------------------------------------------------------------------------

/// n-spectrum weighted word kernel: for each n-gram length `p <= n`, `p`
/// times the number of matching (position in x, position in x2) pairs.
///
/// Computed as `sum_g p(g) * count_x(g) * count_x2(g)`; with spectrum
/// weighting this equals `sum_g <phi_x, phi_x2>_g / p(g)`.
pub fn spectrum_kernel(x: &Sentence, x2: &Sentence, n: usize) -> u64 {
    let cx = ngram_counts(&x.tokens, n);
    let cy = ngram_counts(&x2.tokens, n);
    cx.iter()
        .filter_map(|(g, &(p, a))| cy.get(g).map(|&(_, b)| (p * a * b) as u64))
        .sum()
}

// ---------------------------------------------------------------------------
// Feature matrices
// ---------------------------------------------------------------------------

/// Column-per-instance sparse matrix (`N x m`).
#[derive(Debug, Clone)]
pub struct FeatureMatrix<T> {
    pub columns: Vec<SparseVector<T>>,
    pub index: Arc<FeatureIndex>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Number of feature rows.
    pub fn rows(&self) -> usize {
        self.index.len()
    }

    /// Row-major view: for every feature, the (instance, value) entries.
    pub fn row_lists(&self) -> Vec<Vec<(usize, T)>> {
        let mut rows = vec![Vec::new(); self.rows()];
        for (i, col) in self.columns.iter().enumerate() {
            for (r, v) in col.iter() {
                rows[r].push((i, v));
            }
        }
        rows
    }

    /// Coordinate-list text, one `row col value` triple per line.
    pub fn to_coo(&self) -> String {
        let mut out = String::new();
        for (i, col) in self.columns.iter().enumerate() {
            for (r, v) in col.iter() {
                let _ = writeln!(out, "{r} {i} {v}");
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainingMatrices<T> {
    pub src: FeatureMatrix<T>,
    pub tgt: FeatureMatrix<T>,
}

impl<T: Scalar> TrainingMatrices<T> {
    pub fn src_index(&self) -> &Arc<FeatureIndex> {
        &self.src.index
    }

    pub fn tgt_index(&self) -> &Arc<FeatureIndex> {
        &self.tgt.index
    }
}

/// Builds `M_X` and `M_Y` over `train`, growing both indices; column `i`
/// holds pair `i` in corpus order.
pub fn build_matrices<T: Scalar>(train: &ParallelCorpus, order: usize, weighting: Weighting) -> Result<TrainingMatrices<T>> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let mut src_idx = FeatureIndex::new(order, weighting);
    let mut tgt_idx = FeatureIndex::new(order, weighting);
    let mut src_cols = Vec::with_capacity(train.len());
    let mut tgt_cols = Vec::with_capacity(train.len());
    for p in train.pairs() {
        src_cols.push(src_idx.extract_growing(&p.source));
        tgt_cols.push(tgt_idx.extract_growing(&p.target));
    }
    Ok(TrainingMatrices {
        src: FeatureMatrix {
            columns: src_cols,
            index: Arc::new(src_idx),
        },
        tgt: FeatureMatrix {
            columns: tgt_cols,
            index: Arc::new(tgt_idx),
        },
    })
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

/// Type-level coverage `|test ∩ train| / |test|`.
pub fn coverage(test_feats: &HashSet<String>, train_feats: &HashSet<String>) -> Result<f64> {
    if test_feats.is_empty() {
        return Err(Error::EmptyCoverage);
    }
    let hit = test_feats.iter().filter(|f| train_feats.contains(*f)).count();
    Ok(hit as f64 / test_feats.len() as f64)
}
