//! Interpolated absolute-discounting n-gram language model.
//!
//! `p(w|h) = max(c(h,w) - D, 0) / c(h) + D * N1+(h.) / c(h) * p(w|h')`,
//! bottoming out in a unigram distribution interpolated with a uniform
//! distribution over the vocabulary (including `</s>`) plus one unknown
//! word. Contexts never seen in training back off entirely.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

#[derive(Debug, Clone, Default)]
struct Context {
    total: u32,
    followers: HashMap<u32, u32>,
}

#[derive(Debug, Clone)]
pub struct LmModel {
    order: usize,
    discount: f64,
    ids: HashMap<String, u32>,
    words: Vec<String>,
    /// `levels[k]` maps a k-token context to its follower counts.
    levels: Vec<HashMap<Vec<u32>, Context>>,
    /// Number of predictable types (observed words plus `</s>`).
    types: usize,
}

/// Last `order - 1` token ids of a partial sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LmState(Vec<u32>);

impl LmModel {
    pub const DEFAULT_DISCOUNT: f64 = 0.75;

    pub fn train<'a>(corpus: impl IntoIterator<Item = &'a Sentence>, order: usize) -> Result<Self> {
        Self::train_with_discount(corpus, order, Self::DEFAULT_DISCOUNT)
    }

    pub fn train_with_discount<'a>(corpus: impl IntoIterator<Item = &'a Sentence>, order: usize, discount: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("language model order must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&discount) || discount == 0.0 {
            return Err(Error::InvalidArgument("discount must be in (0, 1)".into()));
        }
        let mut lm = LmModel {
            order,
            discount,
            ids: HashMap::new(),
            words: Vec::new(),
            levels: vec![HashMap::new(); order],
            types: 0,
        };
        for w in [BOS, EOS, UNK] {
            lm.intern(w);
        }
        let mut sentences = 0;
        for s in corpus {
            sentences += 1;
            let mut seq = vec![BOS_ID; order - 1];
            seq.extend(s.tokens.iter().map(|t| lm.intern(t)));
            seq.push(EOS_ID);
            for pos in order - 1..seq.len() {
                let w = seq[pos];
                for k in 0..order {
                    let ctx = seq[pos - k..pos].to_vec();
                    let c = lm.levels[k].entry(ctx).or_default();
                    c.total += 1;
                    *c.followers.entry(w).or_insert(0) += 1;
                }
            }
        }
        if sentences == 0 {
            return Err(Error::InvalidArgument("language model corpus is empty".into()));
        }
        lm.types = lm.levels[0].get(&Vec::new()).map_or(0, |c| c.followers.len());
        Ok(lm)
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(w.to_string(), id);
        self.words.push(w.to_string());
        id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Id of `w`, or the unknown-word id.
    pub fn word_id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().unwrap_or(UNK_ID)
    }

    /// Observed words, excluding boundary and unknown markers.
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.words[3..].iter().map(String::as_str)
    }

    fn prob_ids(&self, history: &[u32], w: u32) -> f64 {
        let d = self.discount;
        let uniform = 1.0 / (self.types as f64 + 1.0);
        let mut p = match self.levels[0].get(&Vec::new()) {
            Some(c) => {
                let cw = c.followers.get(&w).copied().unwrap_or(0) as f64;
                (cw - d).max(0.0) / c.total as f64 + d * c.followers.len() as f64 / c.total as f64 * uniform
            }
            None => uniform,
        };
        let max_k = (self.order - 1).min(history.len());
        for k in 1..=max_k {
            let ctx = &history[history.len() - k..];
            if let Some(c) = self.levels[k].get(ctx) {
                let cw = c.followers.get(&w).copied().unwrap_or(0) as f64;
                let total = c.total as f64;
                p = (cw - d).max(0.0) / total + d * c.followers.len() as f64 / total * p;
            }
        }
        p
    }

    fn history_ids(&self, context: &[&str]) -> Vec<u32> {
        let n = self.order - 1;
        let mut h: Vec<u32> = vec![BOS_ID; n.saturating_sub(context.len())];
        let start = context.len().saturating_sub(n);
        h.extend(context[start..].iter().map(|t| self.word_id(t)));
        h
    }

    /// `p(word | context)`; the context is left-padded with `<s>`.
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let w = if word == EOS { EOS_ID } else { self.word_id(word) };
        self.prob_ids(&self.history_ids(context), w)
    }

    /// Natural-log probability of the sentence including `</s>`.
    pub fn score(&self, tokens: &[String]) -> f64 {
        let mut state = self.start();
        let mut total = 0.0;
        for t in tokens {
            total += self.advance(&mut state, t);
        }
        total + self.end_logprob(&state)
    }

    pub fn start(&self) -> LmState {
        LmState(vec![BOS_ID; self.order - 1])
    }

    /// Log-probability of `word` after `state`; moves the state forward.
    pub fn advance(&self, state: &mut LmState, word: &str) -> f64 {
        let w = self.word_id(word);
        let lp = self.prob_ids(&state.0, w).ln();
        if !state.0.is_empty() {
            state.0.remove(0);
            state.0.push(w);
        }
        lp
    }

    pub fn end_logprob(&self, state: &LmState) -> f64 {
        self.prob_ids(&state.0, EOS_ID).ln()
    }

    /// Sorted text dump: `ngram<TAB>log p<TAB>log backoff` for every observed
    /// n-gram, the backoff being that of the n-gram used as a context.
    pub fn to_text(&self) -> String {
        let mut lines = BTreeMap::new();
        for (k, level) in self.levels.iter().enumerate() {
            for (ctx, c) in level {
                for &w in c.followers.keys() {
                    let p = self.prob_ids(ctx, w);
                    let mut gram = ctx.clone();
                    gram.push(w);
                    let key: Vec<&str> = gram.iter().map(|&i| self.words[i as usize].as_str()).collect();
                    let backoff = if k + 1 < self.order {
                        self.levels[k + 1]
                            .get(&gram)
                            .map(|g| (self.discount * g.followers.len() as f64 / g.total as f64).ln())
                            .unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    lines.insert(key.join(" "), (p.ln(), backoff));
                }
            }
        }
        let mut out = String::new();
        for (k, (lp, bo)) in lines {
            let _ = writeln!(out, "{k}\t{lp:.6}\t{bo:.6}");
        }
        out
    }
}
