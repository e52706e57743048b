//! Per-test-sentence training instance selection.
//!
//! The dice selector scores each candidate pair `(s_i, t_i)` by how strongly
//! the target tokens of `t_i` are associated with the tokens of the test
//! sentence, normalized by the log of the word-alignment search space of the
//! candidate, `|t_i| * ln|s_i|`.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, Sentence, SentencePair};
use crate::error::{Error, Result};
use crate::features::ngram_keys;

/// Per-pair presence counts of source features, target tokens, and their
/// co-occurrence, taken once over the full training corpus.
#[derive(Debug, Clone)]
pub struct CooccurrenceTable {
    order: usize,
    pairs: usize,
    src_ids: HashMap<String, u32>,
    tgt_ids: HashMap<String, u32>,
    c_x: Vec<u32>,
    c_y: Vec<u32>,
    c_xy: HashMap<(u32, u32), u32>,
}

impl CooccurrenceTable {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of sentence pairs the counts were taken over.
    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn c_x(&self, x: &str) -> u32 {
        self.src_ids.get(x).map_or(0, |&i| self.c_x[i as usize])
    }

    pub fn c_y(&self, y: &str) -> u32 {
        self.tgt_ids.get(y).map_or(0, |&i| self.c_y[i as usize])
    }

    pub fn c_xy(&self, x: &str, y: &str) -> u32 {
        match (self.src_ids.get(x), self.tgt_ids.get(y)) {
            (Some(&a), Some(&b)) => self.c_xy.get(&(a, b)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    fn dice_ids(&self, x: u32, y: u32, denominator: Denominator) -> f64 {
        let cx = self.c_x[x as usize] as f64;
        let cy = self.c_y[y as usize] as f64;
        let cxy = self.c_xy.get(&(x, y)).copied().unwrap_or(0) as f64;
        dice_counts(cxy, cx, cy, denominator)
    }
}

pub fn build_cooccurrence(train: &ParallelCorpus, order: usize) -> Result<CooccurrenceTable> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if order == 0 {
        return Err(Error::InvalidArgument("feature order must be at least 1".into()));
    }
    let mut t = CooccurrenceTable {
        order,
        pairs: train.len(),
        src_ids: HashMap::new(),
        tgt_ids: HashMap::new(),
        c_x: Vec::new(),
        c_y: Vec::new(),
        c_xy: HashMap::new(),
    };
    for pair in train.pairs() {
        let mut xs: Vec<u32> = Vec::new();
        let mut seen = HashSet::new();
        for p in 1..=order {
            for key in ngram_keys(&pair.source.tokens, p) {
                if seen.insert(key.clone()) {
                    let next = t.src_ids.len() as u32;
                    let id = *t.src_ids.entry(key).or_insert(next);
                    if id as usize == t.c_x.len() {
                        t.c_x.push(0);
                    }
                    xs.push(id);
                }
            }
        }
        let mut ys: Vec<u32> = Vec::new();
        let mut seen = HashSet::new();
        for tok in &pair.target.tokens {
            if seen.insert(tok.as_str()) {
                let next = t.tgt_ids.len() as u32;
                let id = *t.tgt_ids.entry(tok.clone()).or_insert(next);
                if id as usize == t.c_y.len() {
                    t.c_y.push(0);
                }
                ys.push(id);
            }
        }
        for &x in &xs {
            t.c_x[x as usize] += 1;
        }
        for &y in &ys {
            t.c_y[y as usize] += 1;
        }
        for &x in &xs {
            for &y in &ys {
                *t.c_xy.entry((x, y)).or_insert(0) += 1;
            }
        }
    }
    Ok(t)
}

/// Denominator of the dice score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// `2 C(x,y) / (C(x) C(y))`
    #[default]
    Product,
    /// `2 C(x,y) / (C(x) + C(y))`, the classical form.
    Sum,
}

fn dice_counts(cxy: f64, cx: f64, cy: f64, denominator: Denominator) -> f64 {
    if cx <= 0.0 || cy <= 0.0 {
        return 0.0;
    }
    match denominator {
        Denominator::Product => 2.0 * cxy / (cx * cy),
        Denominator::Sum => 2.0 * cxy / (cx + cy),
    }
}

/// Association between source feature `x` and target token `y`; zero when
/// either marginal is zero.
pub fn dice(x: &str, y: &str, table: &CooccurrenceTable, denominator: Denominator) -> f64 {
    dice_counts(
        table.c_xy(x, y) as f64,
        table.c_x(x) as f64,
        table.c_y(y) as f64,
        denominator,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Instances per test sentence.
    pub m: usize,
    /// Longest n-gram counted as a feature of the test sentence.
    pub feature_order: usize,
    pub denominator: Denominator,
    /// Added to `ln|s_i|`; keeps single-token sources finite.
    pub smoothing: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            m: 100,
            feature_order: 2,
            denominator: Denominator::Product,
            smoothing: 1e-6,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.feature_order == 0 {
            return Err(Error::config("feature_order", "must be at least 1"));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::config("smoothing", "must be positive"));
        }
        Ok(())
    }
}

/// Test-sentence side of the dice score, reusable across candidates.
///
/// Every feature `x` of the test sentence contributes each of its tokens, so
/// the inner double sum collapses to a weighted sum over source tokens.
pub struct DiceQuery<'a> {
    table: &'a CooccurrenceTable,
    denominator: Denominator,
    smoothing: f64,
    token_weights: Vec<(u32, f64)>,
    memo: HashMap<u32, f64>,
}

impl<'a> DiceQuery<'a> {
    pub fn new(sentence: &Sentence, table: &'a CooccurrenceTable, cfg: &SelectionConfig) -> Self {
        let mut features = HashSet::new();
        for p in 1..=cfg.feature_order {
            features.extend(ngram_keys(&sentence.tokens, p));
        }
        let mut weights: HashMap<u32, f64> = HashMap::new();
        for x in &features {
            for y in x.split(' ') {
                if let Some(&id) = table.src_ids.get(y) {
                    *weights.entry(id).or_insert(0.0) += 1.0;
                }
            }
        }
        let mut token_weights: Vec<(u32, f64)> = weights.into_iter().collect();
        token_weights.sort_unstable_by_key(|&(id, _)| id);
        DiceQuery {
            table,
            denominator: cfg.denominator,
            smoothing: cfg.smoothing,
            token_weights,
            memo: HashMap::new(),
        }
    }

    fn target_token_score(&mut self, tok: &str) -> f64 {
        let Some(&y) = self.table.tgt_ids.get(tok) else {
            return 0.0;
        };
        if let Some(&v) = self.memo.get(&y) {
            return v;
        }
        let v = self
            .token_weights
            .iter()
            .map(|&(x, w)| w * self.table.dice_ids(x, y, self.denominator))
            .sum();
        self.memo.insert(y, v);
        v
    }

    pub fn score(&mut self, candidate: &SentencePair) -> f64 {
        let t = &candidate.target.tokens;
        if t.is_empty() {
            return 0.0;
        }
        let numer: f64 = t.iter().map(|tok| self.target_token_score(tok)).sum();
        let s_len = candidate.source.len().max(1) as f64;
        numer / (t.len() as f64 * (s_len.ln() + self.smoothing))
    }
}

/// Dice goodness of candidate pair for test sentence `s`.
pub fn score_pair(s: &Sentence, candidate: &SentencePair, table: &CooccurrenceTable, cfg: &SelectionConfig) -> f64 {
    DiceQuery::new(s, table, cfg).score(candidate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: usize,
    pub score: f64,
}

fn top_m(mut scored: Vec<ScoredId>, m: usize) -> Vec<ScoredId> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    scored.truncate(m);
    scored
}

/// Top `cfg.m` training pairs by dice score, ties by smaller id.
pub fn select_instances(s: &Sentence, train: &ParallelCorpus, table: &CooccurrenceTable, cfg: &SelectionConfig) -> Vec<ScoredId> {
    let mut q = DiceQuery::new(s, table, cfg);
    let scored = train
        .pairs()
        .iter()
        .map(|p| ScoredId {
            id: p.id,
            score: q.score(p),
        })
        .collect();
    top_m(scored, cfg.m)
}

/// Uniform sample of `m` ids without replacement.
pub fn select_random(train: &ParallelCorpus, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = train.ids();
    ids.shuffle(&mut rng);
    ids.truncate(m);
    ids
}

/// Ranks by the number of distinct source bigrams shared with `s`.
pub fn select_ngram_overlap(s: &Sentence, train: &ParallelCorpus, m: usize) -> Vec<ScoredId> {
    let query: HashSet<String> = ngram_keys(&s.tokens, 2).collect();
    let scored = train
        .pairs()
        .iter()
        .map(|p| {
            let shared: HashSet<String> = ngram_keys(&p.source.tokens, 2)
                .filter(|g| query.contains(g))
                .collect();
            ScoredId {
                id: p.id,
                score: shared.len() as f64,
            }
        })
        .collect();
    top_m(scored, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    #[default]
    Dice,
    Random,
    Overlap,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Dice => "dice",
            Selector::Random => "random",
            Selector::Overlap => "overlap",
        }
    }

    /// Runs the selector; random scores are reported as zero.
    pub fn select(self, s: &Sentence, train: &ParallelCorpus, table: &CooccurrenceTable, cfg: &SelectionConfig, seed: u64) -> Vec<ScoredId> {
        match self {
            Selector::Dice => select_instances(s, train, table, cfg),
            Selector::Random => select_random(train, cfg.m, seed)
                .into_iter()
                .map(|id| ScoredId { id, score: 0.0 })
                .collect(),
            Selector::Overlap => select_ngram_overlap(s, train, cfg.m),
        }
    }
}

/// One entry of a selection manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub test_id: usize,
    pub selector: String,
    pub ids: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SelectionRecord {
    pub fn new(test_id: usize, selector: Selector, chosen: &[ScoredId]) -> Self {
        SelectionRecord {
            test_id,
            selector: selector.name().to_string(),
            ids: chosen.iter().map(|c| c.id).collect(),
            scores: chosen.iter().map(|c| c.score).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(pairs: &[(&str, &str)]) -> ParallelCorpus {
        ParallelCorpus::from_strs(pairs)
    }

    #[test]
    fn counts_single_pair() {
        let t = build_cooccurrence(&corpus(&[("a", "x")]), 1).unwrap();
        assert_eq!((t.c_xy("a", "x"), t.c_x("a"), t.c_y("x")), (1, 1, 1));
    }

    #[test]
    fn counts_are_linear_in_repetition() {
        let t = build_cooccurrence(&corpus(&[("a", "x"), ("a", "x"), ("a", "x")]), 1).unwrap();
        assert_eq!((t.c_xy("a", "x"), t.c_x("a"), t.c_y("x")), (3, 3, 3));
    }

    #[test]
    fn counts_two_pairs() {
        let t = build_cooccurrence(&corpus(&[("a b", "x"), ("a", "y")]), 2).unwrap();
        assert_eq!(t.c_xy("a", "x"), 1);
        assert_eq!(t.c_xy("a", "y"), 1);
        assert_eq!(t.c_x("a"), 2);
        assert_eq!(t.c_xy("a b", "x"), 1);
        assert_eq!(t.c_xy("b", "y"), 0);
    }

    #[test]
    fn presence_not_frequency() {
        let t = build_cooccurrence(&corpus(&[("a a a", "x x")]), 1).unwrap();
        assert_eq!((t.c_xy("a", "x"), t.c_x("a"), t.c_y("x")), (1, 1, 1));
    }

    #[test]
    fn dice_arithmetic() {
        assert_eq!(dice_counts(2.0, 2.0, 2.0, Denominator::Product), 1.0);
        assert_eq!(dice_counts(0.0, 3.0, 5.0, Denominator::Product), 0.0);
        assert_eq!(dice_counts(1.0, 2.0, 1.0, Denominator::Product), 1.0);
        assert!((dice_counts(1.0, 2.0, 1.0, Denominator::Sum) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice_counts(1.0, 0.0, 1.0, Denominator::Sum), 0.0);
    }

    #[test]
    fn dice_from_table() {
        // C(a,x)=1, C(a)=2, C(x)=1
        let t = build_cooccurrence(&corpus(&[("a", "x"), ("a", "y")]), 1).unwrap();
        assert_eq!(dice("a", "x", &t, Denominator::Product), 1.0);
        assert!((dice("a", "x", &t, Denominator::Sum) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice("zzz", "x", &t, Denominator::Product), 0.0);
    }

    #[test]
    fn score_zero_without_association() {
        let train = corpus(&[("a b", "x y"), ("c d", "z w")]);
        let t = build_cooccurrence(&train, 1).unwrap();
        let cfg = SelectionConfig::default();
        let s = Sentence::parse("a b");
        assert_eq!(score_pair(&s, &train.pairs()[1], &t, &cfg), 0.0);
    }

    #[test]
    fn score_collapses_for_single_feature() {
        let train = corpus(&[("q", "x"), ("q r", "y"), ("q r s", "x")]);
        let t = build_cooccurrence(&train, 1).unwrap();
        let cfg = SelectionConfig {
            feature_order: 1,
            ..Default::default()
        };
        let s = Sentence::parse("r");
        // dice(r, y) = 2*1/(2*1) = 1; candidate source has 2 tokens
        let cand = &train.pairs()[1];
        let d = dice("r", "y", &t, Denominator::Product);
        let expect = d / (1.0 * ((2.0f64).ln() + cfg.smoothing));
        assert!((score_pair(&s, cand, &t, &cfg) - expect).abs() < 1e-12);
    }

    #[test]
    fn doubling_target_keeps_score() {
        let train = corpus(&[("a b", "x y"), ("a c", "x z"), ("a b", "x y x y")]);
        let t = build_cooccurrence(&train, 1).unwrap();
        let cfg = SelectionConfig::default();
        let s = Sentence::parse("a b");
        let single = score_pair(&s, &train.pairs()[0], &t, &cfg);
        let doubled = score_pair(&s, &train.pairs()[2], &t, &cfg);
        assert!((single - doubled).abs() < 1e-12);
    }

    #[test]
    fn single_token_source_stays_finite() {
        let train = corpus(&[("a", "x")]);
        let t = build_cooccurrence(&train, 1).unwrap();
        let v = score_pair(&Sentence::parse("a"), &train.pairs()[0], &t, &SelectionConfig::default());
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn sharing_candidate_ranks_first() {
        let train = corpus(&[("c d", "z w"), ("a b", "x y")]);
        let t = build_cooccurrence(&train, 2).unwrap();
        let cfg = SelectionConfig::default();
        let picked = select_instances(&Sentence::parse("a b"), &train, &t, &cfg);
        assert_eq!(picked[0].id, 1);
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn selection_is_deterministic_and_tie_broken_by_id() {
        let train = corpus(&[("c", "z"), ("d", "w"), ("e", "v")]);
        let t = build_cooccurrence(&train, 1).unwrap();
        let cfg = SelectionConfig {
            m: 2,
            ..Default::default()
        };
        let a = select_instances(&Sentence::parse("a"), &train, &t, &cfg);
        let b = select_instances(&Sentence::parse("a"), &train, &t, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn random_baseline() {
        let train = corpus(&[("a", "x"), ("b", "y"), ("c", "z"), ("d", "w")]);
        let mut all = select_random(&train, 4, 5);
        assert_eq!(select_random(&train, 4, 5), all);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(select_random(&train, 2, 5).len(), 2);
    }

    #[test]
    fn overlap_baseline() {
        let train = corpus(&[("x y", "1"), ("a b c", "2"), ("b c", "3")]);
        let picked = select_ngram_overlap(&Sentence::parse("a b c"), &train, 3);
        assert_eq!(picked.iter().map(|s| s.id).collect::<Vec<_>>(), vec![1, 2, 0]);
        let none = select_ngram_overlap(&Sentence::parse("q r"), &train, 3);
        assert_eq!(none.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
