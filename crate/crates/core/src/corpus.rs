//! Parallel corpora: loading, writing, evaluation splits and synthetic ciphers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ngram_keys;

/// A whitespace-tokenized sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub raw: String,
}

impl Sentence {
    /// Splits on ASCII whitespace after trimming. No other normalization.
    pub fn parse(line: &str) -> Self {
        let raw = line.trim_end_matches(['\r', '\n']).to_string();
        let tokens = raw.split_ascii_whitespace().map(str::to_string).collect();
        Sentence { tokens, raw }
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        let raw = tokens.join(" ");
        Sentence { tokens, raw }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub id: usize,
    pub source: Sentence,
    pub target: Sentence,
}

/// Ordered sentence pairs. Freshly built corpora have dense ids `0..len`;
/// subsets produced by [`ParallelCorpus::subset`] keep their parent ids so
/// that split manifests can refer back to the original corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn from_sentences(pairs: impl IntoIterator<Item = (Sentence, Sentence)>) -> Self {
        let pairs = pairs
            .into_iter()
            .enumerate()
            .map(|(id, (source, target))| SentencePair { id, source, target })
            .collect();
        ParallelCorpus { pairs }
    }

    /// Convenience constructor from whitespace-tokenized string pairs.
    pub fn from_strs(pairs: &[(&str, &str)]) -> Self {
        Self::from_sentences(
            pairs
                .iter()
                .map(|(s, t)| (Sentence::parse(s), Sentence::parse(t))),
        )
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.id).collect()
    }

    pub fn get(&self, id: usize) -> Option<&SentencePair> {
        // ids are sorted ascending in every corpus we construct
        self.pairs
            .binary_search_by_key(&id, |p| p.id)
            .ok()
            .map(|i| &self.pairs[i])
    }

    /// Pairs with the given ids, in ascending id order. Unknown ids are ignored.
    pub fn subset(&self, ids: &[usize]) -> ParallelCorpus {
        let wanted: HashSet<usize> = ids.iter().copied().collect();
        ParallelCorpus {
            pairs: self
                .pairs
                .iter()
                .filter(|p| wanted.contains(&p.id))
                .cloned()
                .collect(),
        }
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|p| &p.source)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|p| &p.target)
    }

    /// Mean target length over mean source length.
    pub fn length_ratio(&self) -> f64 {
        let src: usize = self.sources().map(Sentence::len).sum();
        let tgt: usize = self.targets().map(Sentence::len).sum();
        if src == 0 {
            1.0
        } else {
            tgt as f64 / src as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: ParallelCorpus,
    /// Line pairs dropped because either side was empty.
    pub dropped: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Reads two line-aligned files. Pairs where either side tokenizes to nothing
/// are dropped and counted.
pub fn load_parallel(source_path: &Path, target_path: &Path) -> Result<LoadedCorpus> {
    let src = read_lines(source_path)?;
    let tgt = read_lines(target_path)?;
    if src.len() != tgt.len() {
        return Err(Error::Alignment {
            source_lines: src.len(),
            target_lines: tgt.len(),
        });
    }
    let mut dropped = 0;
    let mut kept = Vec::with_capacity(src.len());
    for (s, t) in src.iter().zip(&tgt) {
        let (s, t) = (Sentence::parse(s), Sentence::parse(t));
        if s.is_empty() || t.is_empty() {
            dropped += 1;
        } else {
            kept.push((s, t));
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} pairs with an empty side");
    }
    Ok(LoadedCorpus {
        corpus: ParallelCorpus::from_sentences(kept),
        dropped,
    })
}

/// Writes tokens joined by single spaces, one sentence per line, LF endings.
pub fn write_parallel(corpus: &ParallelCorpus, source_path: &Path, target_path: &Path) -> Result<()> {
    let join = |it: &mut dyn Iterator<Item = &Sentence>| {
        let mut out = String::new();
        for s in it {
            out.push_str(&s.text());
            out.push('\n');
        }
        out
    };
    fs::write(source_path, join(&mut corpus.sources())).map_err(|e| Error::io(source_path, e))?;
    fs::write(target_path, join(&mut corpus.targets())).map_err(|e| Error::io(target_path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Inclusive source-length range in tokens.
    pub len_range: (usize, usize),
    /// Target-bigram coverage range, `0 <= lo < hi <= 1`.
    pub cov_range: (f64, f64),
    pub per_bucket: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            len_range: (10, 20),
            cov_range: (0.6, 1.0),
            per_bucket: 20,
            seed: 0,
        }
    }
}

/// A coverage bucket `[lo, hi)`, or the closed point bucket `[1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl Bucket {
    pub fn contains(&self, v: f64) -> bool {
        if self.closed {
            v >= self.lo && v <= self.hi
        } else {
            v >= self.lo && v < self.hi
        }
    }
}

/// Tenth-width half-open buckets covering `[lo, hi)`, plus a point bucket
/// for full coverage when `hi == 1`. `[0.6, 1]` gives five buckets.
pub fn coverage_buckets(lo: f64, hi: f64) -> Vec<Bucket> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let b_lo = lo + 0.1 * k as f64;
        if b_lo >= hi - 1e-9 {
            break;
        }
        let b_hi = (lo + 0.1 * (k + 1) as f64).min(hi);
        // snap to 1e-9 so 0.6 + 0.1*3 lands on 0.9 exactly enough for display
        let snap = |v: f64| (v * 1e9).round() / 1e9;
        out.push(Bucket {
            lo: snap(b_lo),
            hi: snap(b_hi),
            closed: false,
        });
        k += 1;
    }
    if (hi - 1.0).abs() < 1e-12 {
        out.push(Bucket {
            lo: 1.0,
            hi: 1.0,
            closed: true,
        });
    } else if let Some(last) = out.last_mut() {
        last.closed = true;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub dev2: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// JSON manifest listing pair ids per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub dev2: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DataSplit {
    pub fn manifest(&self, warnings: &[String]) -> SplitManifest {
        SplitManifest {
            train: self.train.ids(),
            dev: self.dev.ids(),
            dev2: self.dev2.ids(),
            test: self.test.ids(),
            warnings: warnings.to_vec(),
        }
    }

    pub fn from_manifest(corpus: &ParallelCorpus, manifest: &SplitManifest) -> Self {
        DataSplit {
            train: corpus.subset(&manifest.train),
            dev: corpus.subset(&manifest.dev),
            dev2: corpus.subset(&manifest.dev2),
            test: corpus.subset(&manifest.test),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub split: DataSplit,
    /// Human-readable shortfall notices; never silently padded.
    pub warnings: Vec<String>,
}

/// Distinct target bigrams of a sentence.
fn target_bigrams(s: &Sentence) -> HashSet<String> {
    ngram_keys(&s.tokens, 2).collect()
}

/// Fraction of `feats` present in `doc_freq` with positive count.
fn coverage_of(feats: &HashSet<String>, doc_freq: &HashMap<String, usize>) -> Option<f64> {
    if feats.is_empty() {
        return None;
    }
    let hit = feats
        .iter()
        .filter(|f| doc_freq.get(*f).copied().unwrap_or(0) > 0)
        .count();
    Some(hit as f64 / feats.len() as f64)
}

/// Target-bigram coverage of pair `id` against the given training corpus.
pub fn target_bigram_coverage(pair: &SentencePair, train: &ParallelCorpus) -> Option<f64> {
    let mut df: HashMap<String, usize> = HashMap::new();
    for t in train.targets() {
        for g in target_bigrams(t) {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    coverage_of(&target_bigrams(&pair.target), &df)
}

/// Draws test, dev and dev2 (in that order) from coverage buckets, removes
/// them from training, and drops training pairs whose source exactly matches
/// a test source. Eligibility is re-verified against the final training set;
/// pairs that fall out of range are returned to training and the shortfall is
/// reported.
pub fn select_eval_split(corpus: &ParallelCorpus, cfg: &SplitConfig) -> Result<SplitOutcome> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("corpus is empty".into()));
    }
    let (lo, hi) = cfg.cov_range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "coverage range must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
        )));
    }
    let buckets = coverage_buckets(lo, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let bigrams: Vec<HashSet<String>> = corpus.targets().map(target_bigrams).collect();
    let mut df: HashMap<String, usize> = HashMap::new();
    for set in &bigrams {
        for g in set {
            *df.entry(g.clone()).or_insert(0) += 1;
        }
    }

    // Coverage against the rest of the corpus, excluding the pair itself.
    let leave_one_out = |i: usize, df: &HashMap<String, usize>| -> Option<f64> {
        let set = &bigrams[i];
        if set.is_empty() {
            return None;
        }
        let hit = set.iter().filter(|g| df.get(*g).copied().unwrap_or(0) > 1).count();
        Some(hit as f64 / set.len() as f64)
    };
    let len_ok = |i: usize| {
        let n = corpus.pairs[i].source.len();
        n >= cfg.len_range.0 && n <= cfg.len_range.1
    };

    let mut bucket_members: Vec<Vec<usize>> = vec![Vec::new(); buckets.len()];
    for i in 0..corpus.len() {
        if !len_ok(i) {
            continue;
        }
        if let Some(c) = leave_one_out(i, &df) {
            if let Some(b) = buckets.iter().position(|b| b.contains(c)) {
                bucket_members[b].push(i);
            }
        }
    }
    for members in &mut bucket_members {
        members.shuffle(&mut rng);
    }

    let names = ["test", "dev", "dev2"];
    let mut chosen: [Vec<usize>; 3] = Default::default();
    let mut warnings = Vec::new();
    for (slot, name) in names.iter().enumerate() {
        for (b, members) in bucket_members.iter_mut().enumerate() {
            let take = cfg.per_bucket.min(members.len());
            chosen[slot].extend(members.drain(..take));
            if take < cfg.per_bucket {
                warnings.push(format!(
                    "{name}: bucket {} has {take} of {} requested sentences",
                    describe(&buckets[b]),
                    cfg.per_bucket
                ));
            }
        }
    }

    // Fixed point: returning pairs to training only grows it, but growth can
    // push coverage above `hi`, so iterate until no selected pair violates.
    loop {
        let test_sources: HashSet<&[String]> = chosen[0]
            .iter()
            .map(|&i| corpus.pairs[i].source.tokens.as_slice())
            .collect();
        let selected: HashSet<usize> = chosen.iter().flatten().copied().collect();
        let train_idx: Vec<usize> = (0..corpus.len())
            .filter(|i| !selected.contains(i))
            .filter(|&i| !test_sources.contains(corpus.pairs[i].source.tokens.as_slice()))
            .collect();
        let mut train_df: HashMap<String, usize> = HashMap::new();
        for &i in &train_idx {
            for g in &bigrams[i] {
                *train_df.entry(g.clone()).or_insert(0) += 1;
            }
        }
        let mut violated = false;
        for (slot, name) in names.iter().enumerate() {
            let before = chosen[slot].len();
            chosen[slot].retain(|&i| {
                coverage_of(&bigrams[i], &train_df)
                    .map(|c| c >= lo && c <= hi)
                    .unwrap_or(false)
            });
            let lost = before - chosen[slot].len();
            if lost > 0 {
                violated = true;
                warnings.push(format!(
                    "{name}: {lost} sentences fell out of the coverage range after removal from training"
                ));
            }
        }
        if !violated {
            let ids = |v: &[usize]| -> Vec<usize> {
                let mut ids: Vec<usize> = v.iter().map(|&i| corpus.pairs[i].id).collect();
                ids.sort_unstable();
                ids
            };
            let train_ids: Vec<usize> = train_idx.iter().map(|&i| corpus.pairs[i].id).collect();
            for w in &warnings {
                log::warn!("{w}");
            }
            return Ok(SplitOutcome {
                split: DataSplit {
                    train: corpus.subset(&train_ids),
                    test: corpus.subset(&ids(&chosen[0])),
                    dev: corpus.subset(&ids(&chosen[1])),
                    dev2: corpus.subset(&ids(&chosen[2])),
                },
                warnings,
            });
        }
    }
}

fn describe(b: &Bucket) -> String {
    if b.closed {
        format!("[{}, {}]", b.lo, b.hi)
    } else {
        format!("[{}, {})", b.lo, b.hi)
    }
}

// ---------------------------------------------------------------------------
// Synthetic cipher corpora
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Substitution {
    /// Target token equals source token.
    Identity,
    /// Seeded random bijection onto target tokens `t0..t{V-1}`.
    Permutation,
    /// Explicit source→target table; the source vocabulary is its key set.
    Table(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub substitution: Substitution,
    /// Consecutive chunks of `reorder_window + 1` target tokens are reversed
    /// with probability `reorder_prob`. Zero disables reordering.
    pub reorder_window: usize,
    pub reorder_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Zipf exponent of the unigram distribution; 0 is uniform.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 200,
            substitution: Substitution::Permutation,
            reorder_window: 0,
            reorder_prob: 0.5,
            min_len: 5,
            max_len: 15,
            zipf: 1.0,
            seed: 0,
        }
    }
}

/// A generated corpus together with its ground-truth token mapping.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: ParallelCorpus,
    pub mapping: BTreeMap<String, String>,
}

impl SynthSpec {
    /// Source vocabulary and the source→target mapping it induces.
    pub fn cipher(&self) -> Result<(Vec<String>, BTreeMap<String, String>)> {
        let table = match &self.substitution {
            Substitution::Table(t) => t.clone(),
            Substitution::Identity => (0..self.vocab_size)
                .map(|i| (format!("w{i}"), format!("w{i}")))
                .collect(),
            Substitution::Permutation => {
                let mut perm: Vec<usize> = (0..self.vocab_size).collect();
                // separate stream so the permutation does not depend on `count`
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                perm.shuffle(&mut rng);
                (0..self.vocab_size)
                    .map(|i| (format!("w{i}"), format!("t{}", perm[i])))
                    .collect()
            }
        };
        if table.len() < 2 {
            return Err(Error::InvalidArgument("vocabulary must have at least 2 tokens".into()));
        }
        let mut vocab: Vec<String> = table.keys().cloned().collect();
        // w0, w1, ... in numeric order so Zipf rank follows the index
        vocab.sort_by(|a, b| natural_key(a).cmp(&natural_key(b)));
        Ok((vocab, table))
    }

    /// Applies the substitution, then chunk-wise reordering drawn from `rng`.
    pub fn translate<R: Rng>(&self, table: &BTreeMap<String, String>, source: &[String], rng: &mut R) -> Vec<String> {
        let mut out: Vec<String> = source
            .iter()
            .map(|t| table.get(t).cloned().unwrap_or_else(|| t.clone()))
            .collect();
        if self.reorder_window > 0 {
            for chunk in out.chunks_mut(self.reorder_window + 1) {
                if rng.gen_bool(self.reorder_prob.clamp(0.0, 1.0)) {
                    chunk.reverse();
                }
            }
        }
        out
    }
}

fn natural_key(s: &str) -> (String, u64) {
    let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
    let (head, tail) = s.split_at(split);
    (head.to_string(), tail.parse().unwrap_or(0))
}

/// Generates `count` sentence pairs deterministically from `spec.seed`.
pub fn synth_generate(spec: &SynthSpec, count: usize) -> Result<SynthCorpus> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::InvalidArgument(format!(
            "invalid length range [{}, {}]",
            spec.min_len, spec.max_len
        )));
    }
    let (vocab, table) = spec.cipher()?;
    let weights: Vec<f64> = (0..vocab.len())
        .map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf))
        .collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidArgument(format!("bad zipf weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let src: Vec<String> = (0..len).map(|_| vocab[dist.sample(&mut rng)].clone()).collect();
        let tgt = spec.translate(&table, &src, &mut rng);
        pairs.push((Sentence::from_tokens(&src), Sentence::from_tokens(&tgt)));
    }
    Ok(SynthCorpus {
        corpus: ParallelCorpus::from_sentences(pairs),
        mapping: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_single_pair() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s", "a b\n");
        let t = write(dir.path(), "t", "x y\n");
        let loaded = load_parallel(&s, &t).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.corpus.pairs()[0].source.tokens, ["a", "b"]);
        assert_eq!(loaded.corpus.pairs()[0].target.tokens, ["x", "y"]);
        assert_eq!(loaded.dropped, 0);
    }

    #[test]
    fn load_rejects_misaligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s", "a\nb\nc\n");
        let t = write(dir.path(), "t", "x\ny\nz\nw\n");
        match load_parallel(&s, &t) {
            Err(Error::Alignment {
                source_lines: 3,
                target_lines: 4,
            }) => {}
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn load_drops_empty_lines() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s", "a\nb\nc\nd\ne\n");
        let t = write(dir.path(), "t", "v\nw\n   \ny\nz\n");
        let loaded = load_parallel(&s, &t).unwrap();
        assert_eq!(loaded.corpus.len(), 4);
        assert_eq!(loaded.dropped, 1);
        assert_eq!(loaded.corpus.ids(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn buckets_for_default_range() {
        let b = coverage_buckets(0.6, 1.0);
        assert_eq!(b.len(), 5);
        assert!(b[0].contains(0.6) && !b[0].contains(0.7));
        assert!(b[3].contains(0.95) && !b[3].contains(1.0));
        assert!(b[4].contains(1.0));
        // every value in range lands in exactly one bucket
        for k in 0..=400 {
            let v = 0.6 + 0.001 * k as f64;
            let v = v.min(1.0);
            assert_eq!(b.iter().filter(|b| b.contains(v)).count(), 1, "{v}");
        }
    }

    #[test]
    fn identity_cipher_copies_source() {
        let spec = SynthSpec {
            substitution: Substitution::Identity,
            vocab_size: 20,
            ..Default::default()
        };
        let c = synth_generate(&spec, 50).unwrap();
        for p in c.corpus.pairs() {
            assert_eq!(p.source.tokens, p.target.tokens);
        }
    }

    #[test]
    fn table_substitution() {
        let table: BTreeMap<String, String> = [("a", "x"), ("b", "y")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let spec = SynthSpec {
            substitution: Substitution::Table(table.clone()),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = spec.translate(&table, &["a".into(), "b".into()], &mut rng);
        assert_eq!(out, ["x", "y"]);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec {
            seed: 11,
            reorder_window: 2,
            ..Default::default()
        };
        let a = synth_generate(&spec, 100).unwrap();
        let b = synth_generate(&spec, 100).unwrap();
        assert_eq!(a.corpus, b.corpus);
    }

    #[test]
    fn window_zero_is_bijective_on_unigrams() {
        let spec = SynthSpec {
            seed: 3,
            vocab_size: 30,
            ..Default::default()
        };
        let c = synth_generate(&spec, 200).unwrap();
        let mut seen: HashMap<String, HashSet<String>> = HashMap::new();
        for p in c.corpus.pairs() {
            for (s, t) in p.source.tokens.iter().zip(&p.target.tokens) {
                seen.entry(s.clone()).or_default().insert(t.clone());
            }
        }
        for (s, ts) in &seen {
            assert_eq!(ts.len(), 1, "{s} maps to {ts:?}");
            assert_eq!(ts.iter().next(), c.mapping.get(s));
        }
    }

    #[test]
    fn synth_rejects_bad_spec() {
        let spec = SynthSpec {
            vocab_size: 1,
            ..Default::default()
        };
        assert!(synth_generate(&spec, 1).is_err());
        assert!(synth_generate(&SynthSpec::default(), 0).is_err());
    }
}
