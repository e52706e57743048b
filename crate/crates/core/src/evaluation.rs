//! Feature-level evaluation of predicted target vectors, threshold and
//! hyperparameter tuning, and corpus BLEU.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::features::{ngram_counts, FeatureIndex, SparseVector};
use crate::scalar::Scalar;

/// Cutoff applied to predicted feature values: a feature is predicted when
/// its value is strictly greater.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold(pub f64);

/// `{j : yhat_j > thr}` over a universe of `universe` features; features
/// absent from `yhat` count as zero.
pub fn binarize(yhat: &SparseVector<f64>, universe: usize, thr: Threshold) -> BTreeSet<usize> {
    if thr.0 < 0.0 {
        (0..universe).filter(|&j| yhat.get(j) > thr.0).collect()
    } else {
        yhat.iter().filter(|&(_, v)| v > thr.0).map(|(j, _)| j).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.tn += o.tn;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

pub fn confusion(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>, universe: usize) -> ConfusionCounts {
    let tp = pred.intersection(gold).count() as u64;
    let fp = pred.len() as u64 - tp;
    let fn_ = gold.len() as u64 - tp;
    let tn = (universe as u64).saturating_sub(tp + fp + fn_);
    ConfusionCounts { tp, tn, fp, fn_ }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub ber: T,
    pub prec: T,
    pub rec: T,
    pub f1: T,
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_u64(num).unwrap() / T::from_u64(den).unwrap()
    }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score<T: Scalar>(prec: T, rec: T) -> T {
    if prec + rec > T::zero() {
        T::lit(2.0) * prec * rec / (prec + rec)
    } else {
        T::zero()
    }
}

/// Precision, recall, F1 and balanced error rate; every 0/0 is 0.
pub fn metrics<T: Scalar>(c: &ConfusionCounts) -> Metrics<T> {
    let prec = ratio::<T>(c.tp, c.tp + c.fp);
    let rec = ratio::<T>(c.tp, c.tp + c.fn_);
    let fpr = ratio::<T>(c.fp, c.tn + c.fp);
    let fnr = ratio::<T>(c.fn_, c.tp + c.fn_);
    Metrics {
        ber: (fpr + fnr) / T::lit(2.0),
        prec,
        rec,
        f1: f1_score(prec, rec),
    }
}

/// A predicted target vector together with its gold feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub yhat: SparseVector<f64>,
    pub gold: BTreeSet<usize>,
    /// Index features plus reference features the index lacks.
    pub universe: usize,
}

/// Gold feature ids of `reference` under `index`. Reference n-grams missing
/// from the index get fresh ids past its end, so they count as misses and
/// extend the evaluated universe.
pub fn gold_features(reference: &Sentence, index: &FeatureIndex) -> (BTreeSet<usize>, usize) {
    let mut gold = BTreeSet::new();
    let mut next = index.len();
    for key in ngram_counts(&reference.tokens, index.order_max()).keys() {
        match index.col(key) {
            Some(c) => {
                gold.insert(c);
            }
            None => {
                gold.insert(next);
                next += 1;
            }
        }
    }
    (gold, next)
}

impl Scored {
    pub fn new(yhat: SparseVector<f64>, reference: &Sentence, index: &FeatureIndex) -> Self {
        let (gold, universe) = gold_features(reference, index);
        Scored { yhat, gold, universe }
    }

    pub fn counts(&self, thr: Threshold) -> ConfusionCounts {
        confusion(&binarize(&self.yhat, self.universe, thr), &self.gold, self.universe)
    }
}

/// Micro-averaged counts over sentences.
pub fn micro_counts(items: &[Scored], thr: Threshold) -> ConfusionCounts {
    let mut total = ConfusionCounts::default();
    for it in items {
        total += it.counts(thr);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: Threshold,
    pub f1: f64,
}

/// Maximizes micro-averaged F1 over cutoffs at every distinct predicted value
/// and at zero; ties go to the smallest cutoff.
///
/// The cutoff `v` selects `{yhat > v}`. The reported threshold is moved to the
/// midpoint between `v` and the next larger value, which selects the same set
/// and keeps the boundary away from the values themselves.
pub fn tune_threshold(items: &[Scored]) -> Result<ThresholdChoice> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("no dev predictions to tune on".into()));
    }
    // (value, gold, non-gold) groups; implicit zeros folded into value 0
    let mut groups: HashMap<u64, (f64, u64, u64)> = HashMap::new();
    let mut total_gold = 0u64;
    for it in items {
        total_gold += it.gold.len() as u64;
        let mut explicit = 0u64;
        let mut explicit_gold = 0u64;
        for (j, v) in it.yhat.iter() {
            let is_gold = it.gold.contains(&j);
            let g = groups.entry(v.to_bits()).or_insert((v, 0, 0));
            if is_gold {
                g.1 += 1;
                explicit_gold += 1;
            } else {
                g.2 += 1;
            }
            explicit += 1;
        }
        let zero = groups.entry(0f64.to_bits()).or_insert((0.0, 0, 0));
        let zero_gold = it.gold.len() as u64 - explicit_gold;
        zero.1 += zero_gold;
        zero.2 += (it.universe as u64).saturating_sub(explicit + zero_gold);
    }
    let mut values: Vec<(f64, u64, u64)> = groups.into_values().collect();
    values.sort_by(|a, b| b.0.total_cmp(&a.0));

    // sweep cutoffs from the largest value down; predicted = strictly above
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best: Option<(usize, f64)> = None;
    for (i, &(_, g, ng)) in values.iter().enumerate() {
        let c = ConfusionCounts {
            tp,
            fp,
            fn_: total_gold - tp,
            tn: 0,
        };
        let f1 = metrics::<f64>(&c).f1;
        if best.map_or(true, |(_, b)| f1 >= b) {
            best = Some((i, f1));
        }
        tp += g;
        fp += ng;
    }
    let (i, f1) = best.expect("at least the zero group exists");
    let thr = if i == 0 {
        values[0].0
    } else {
        0.5 * (values[i].0 + values[i - 1].0)
    };
    Ok(ThresholdChoice {
        threshold: Threshold(thr),
        f1,
    })
}

fn argmax_first<C: Copy>(grid: &[C], mut eval: impl FnMut(C) -> f64) -> Result<(C, f64)> {
    let mut best: Option<(C, f64)> = None;
    for &c in grid {
        let score = eval(c);
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((c, score));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty tuning grid".into()))
}

/// Grid search over ridge `lambda` by dev F1; ties go to the smaller value.
pub fn tune_lambda(grid: &[f64], eval: impl FnMut(f64) -> f64) -> Result<(f64, f64)> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    argmax_first(&g, eval)
}

/// Grid search over the stagewise budget by dev F1; ties go to fewer steps.
pub fn tune_fsr_iters(grid: &[usize], eval: impl FnMut(usize) -> f64) -> Result<(usize, f64)> {
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    argmax_first(&g, eval)
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

/// Corpus-level BLEU with clipped n-gram precisions up to `max_n` and
/// brevity penalty `min(1, exp(1 - r/c))`. Zero if any precision is zero.
pub fn bleu(hypotheses: &[Sentence], references: &[Sentence], max_n: usize) -> Result<f64> {
    bleu_impl(hypotheses, references, max_n, false)
}

/// BLEU with add-one smoothing of the n > 1 precisions, so that small sets
/// without a single matching 4-gram still rank differently. Used as a tuning
/// objective only.
pub fn bleu_smoothed(hypotheses: &[Sentence], references: &[Sentence], max_n: usize) -> Result<f64> {
    bleu_impl(hypotheses, references, max_n, true)
}

fn bleu_impl(hypotheses: &[Sentence], references: &[Sentence], max_n: usize, smooth: bool) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() || max_n == 0 {
        return Err(Error::InvalidArgument("bleu needs at least one sentence and max_n >= 1".into()));
    }
    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hypotheses.iter().zip(references) {
        c += h.len();
        r += rf.len();
        let hc = ngram_counts(&h.tokens, max_n);
        let rc = ngram_counts(&rf.tokens, max_n);
        for (g, &(p, n)) in &hc {
            total[p - 1] += n as u64;
            let clip = rc.get(g).map_or(0, |&(_, m)| m.min(n));
            matched[p - 1] += clip as u64;
        }
    }
    if smooth {
        for n in 1..max_n {
            matched[n] += 1;
            total[n] += 1;
        }
    }
    if c == 0 || matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_p.exp())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEval {
    pub id: usize,
    pub counts: ConfusionCounts,
    pub f1: f64,
    pub scov: f64,
    pub tcov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ber: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
    /// Mean of per-sentence F1.
    pub macro_f1: f64,
    pub scov: f64,
    pub tcov: f64,
    pub per_sentence: Vec<SentenceEval>,
}

impl EvalReport {
    pub fn from_sentences(per_sentence: Vec<SentenceEval>) -> Self {
        let mut total = ConfusionCounts::default();
        for s in &per_sentence {
            total += s.counts;
        }
        let m = metrics::<f64>(&total);
        let n = per_sentence.len().max(1) as f64;
        let mean = |f: fn(&SentenceEval) -> f64| per_sentence.iter().map(f).sum::<f64>() / n;
        EvalReport {
            ber: m.ber,
            prec: m.prec,
            rec: m.rec,
            f1: m.f1,
            macro_f1: mean(|s| s.f1),
            scov: mean(|s| s.scov),
            tcov: mean(|s| s.tcov),
            per_sentence,
        }
    }
}
