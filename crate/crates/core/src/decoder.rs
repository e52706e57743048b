//! Pre-image search: turn a predicted target feature vector into a sentence.
//!
//! Predicted n-grams above a threshold become edges of a De Bruijn graph over
//! (n-1)-gram contexts. Sentences are paths from `<s>` to `</s>`; a beam
//! search looks for the best-scoring path where every edge may be used at
//! most its multiplicity times. When the n-grams split into several chains, a
//! gap node joins every chain end to every chain start, so one sentence can
//! cover more than one fragment. Paths are scored by a linear combination of
//! four features: summed edge weight, language model log-probability, the
//! brevity term `exp(alpha * (l_R - |s| / |path|))`, and a future cost equal
//! to the weight still reachable through unconsumed edges.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, SparseVector};
use crate::lm::{LmModel, LmState};

pub const START: usize = 0;
pub const END: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Ngram,
    Start,
    End,
    /// Into or out of the gap node that links path fragments.
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Tokens appended to the sentence when the edge is taken.
    pub emit: Vec<String>,
    pub weight: f64,
    pub multiplicity: u32,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    /// `max(1, round(yhat / median positive yhat))`
    #[default]
    Rounded,
    /// Every edge usable once.
    Binary,
}

#[derive(Debug, Clone)]
pub struct DeBruijnGraph {
    order: usize,
    /// Context tokens per node; `START` and `END` are the boundary markers.
    nodes: Vec<Vec<String>>,
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
    /// Start and gap edges entering each node; taking one uses up all.
    entries: Vec<Vec<usize>>,
    gap: Option<usize>,
}

impl DeBruijnGraph {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[Vec<String>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    /// Node linking fragment ends to fragment starts, present only when the
    /// predicted n-grams do not form a single chain.
    pub fn gap_node(&self) -> Option<usize> {
        self.gap
    }

    pub fn node_of(&self, context: &[&str]) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.iter().map(String::as_str).eq(context.iter().copied()))
    }

    /// Builds from explicit n-gram weights (each n-gram given as its tokens),
    /// with boundary edges synthesized as in [`build_graph`].
    pub fn from_ngrams(order: usize, ngrams: &[(Vec<String>, f64)], unigrams: &[(String, f64)], multiplicity: Multiplicity) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument("decoding order must be at least 2".into()));
        }
        let mut g = DeBruijnGraph {
            order,
            nodes: vec![vec!["<s>".into()], vec!["</s>".into()]],
            edges: Vec::new(),
            out: vec![Vec::new(), Vec::new()],
            entries: Vec::new(),
            gap: None,
        };
        let mut ids: HashMap<Vec<String>, usize> = HashMap::new();
        let mut node = |g: &mut DeBruijnGraph, ctx: &[String]| -> usize {
            if let Some(&i) = ids.get(ctx) {
                return i;
            }
            g.nodes.push(ctx.to_vec());
            g.out.push(Vec::new());
            ids.insert(ctx.to_vec(), g.nodes.len() - 1);
            g.nodes.len() - 1
        };

        let mut positive: Vec<f64> = ngrams.iter().map(|(_, w)| *w).filter(|w| *w > 0.0).collect();
        positive.sort_by(f64::total_cmp);
        let scale = if positive.is_empty() {
            1.0
        } else {
            positive[positive.len() / 2]
        };
        for (toks, w) in ngrams {
            assert_eq!(toks.len(), order, "n-gram length must equal the decoding order");
            let from = node(&mut g, &toks[..order - 1]);
            let to = node(&mut g, &toks[1..]);
            let mult = match multiplicity {
                Multiplicity::Binary => 1,
                Multiplicity::Rounded => ((w / scale).round() as u32).max(1),
            };
            g.push_edge(Edge {
                from,
                to,
                emit: vec![toks[order - 1].clone()],
                weight: *w,
                multiplicity: mult,
                kind: EdgeKind::Ngram,
            });
        }
        let unigram_weight: HashMap<&str, f64> = unigrams.iter().map(|(u, w)| (u.as_str(), *w)).collect();
        if order == 2 {
            for (u, _) in unigrams {
                node(&mut g, std::slice::from_ref(u));
            }
        }
        if g.nodes.len() == 2 {
            return Err(Error::DecodeEmpty);
        }

        let n = g.nodes.len();
        let (mut indeg, mut outdeg) = (vec![0i64; n], vec![0i64; n]);
        for e in &g.edges {
            outdeg[e.from] += e.multiplicity as i64;
            indeg[e.to] += e.multiplicity as i64;
        }
        // boundary candidates per weakly connected component; a balanced
        // component (an Eulerian circuit) may be entered and left anywhere
        let mut comp: Vec<usize> = (0..n).collect();
        fn root(comp: &mut [usize], mut v: usize) -> usize {
            while comp[v] != v {
                comp[v] = comp[comp[v]];
                v = comp[v];
            }
            v
        }
        for e in &g.edges {
            let (a, b) = (root(&mut comp, e.from), root(&mut comp, e.to));
            comp[a.max(b)] = a.min(b);
        }
        let roots: Vec<usize> = (0..n).map(|v| root(&mut comp, v)).collect();
        let pick = |qualifies: &dyn Fn(usize) -> bool| -> Vec<usize> {
            let has: std::collections::HashSet<usize> = (2..n).filter(|&v| qualifies(v)).map(|v| roots[v]).collect();
            (2..n).filter(|&v| qualifies(v) || !has.contains(&roots[v])).collect()
        };
        let starts = pick(&|v| outdeg[v] > indeg[v]);
        let ends = pick(&|v| indeg[v] > outdeg[v] || (outdeg[v] == 0 && indeg[v] > 0));
        let fragmented = starts.len() > 1 || ends.len() > 1;
        let gap = fragmented.then(|| {
            g.nodes.push(vec!["<gap>".into()]);
            g.out.push(Vec::new());
            g.nodes.len() - 1
        });
        g.gap = gap;
        g.entries = vec![Vec::new(); g.nodes.len()];
        for &v in &starts {
            let ctx = g.nodes[v].clone();
            let unigram = unigram_weight.get(ctx.join(" ").as_str()).copied().unwrap_or(0.0).max(0.0);
            let isolated = indeg[v] == 0 && outdeg[v] == 0;
            for (from, kind) in std::iter::once((START, EdgeKind::Start)).chain(gap.map(|h| (h, EdgeKind::Gap))) {
                // jumping into a chain earns nothing by itself; only lone
                // unigrams are worth a detour
                let weight = if kind == EdgeKind::Start || isolated { unigram } else { 0.0 };
                g.entries[v].push(g.edges.len());
                g.push_edge(Edge {
                    from,
                    to: v,
                    emit: ctx.clone(),
                    weight,
                    multiplicity: 1,
                    kind,
                });
            }
        }
        for &v in &ends {
            g.push_edge(Edge {
                from: v,
                to: END,
                emit: Vec::new(),
                weight: 0.0,
                multiplicity: 1,
                kind: EdgeKind::End,
            });
            if let Some(h) = gap {
                g.push_edge(Edge {
                    from: v,
                    to: h,
                    emit: Vec::new(),
                    weight: 0.0,
                    multiplicity: 1,
                    kind: EdgeKind::Gap,
                });
            }
        }
        Ok(g)
    }

    fn push_edge(&mut self, e: Edge) {
        self.out[e.from].push(self.edges.len());
        self.edges.push(e);
    }

    /// Marks edge `e` as taken once more in `used`.
    pub fn consume(&self, used: &mut [u32], e: usize) {
        used[e] += 1;
        let edge = &self.edges[e];
        if matches!(edge.kind, EdgeKind::Start | EdgeKind::Gap) {
            for &x in &self.entries[edge.to] {
                used[x] = self.edges[x].multiplicity;
            }
        }
    }
}

/// Graph over the predicted n-grams of length `order` whose value exceeds
/// `decode_threshold`. Predicted unigrams supply the boundary edge weights
/// (and, for bigram graphs, isolated nodes).
pub fn build_graph(yhat: &SparseVector<f64>, tgt_index: &FeatureIndex, decode_threshold: f64, order: usize, multiplicity: Multiplicity) -> Result<DeBruijnGraph> {
    let mut ngrams = Vec::new();
    let mut unigrams = Vec::new();
    for (c, v) in yhat.iter() {
        if v <= decode_threshold || c >= tgt_index.len() {
            continue;
        }
        let p = tgt_index.order_of(c);
        let toks: Vec<String> = tgt_index.feature(c).split(' ').map(str::to_string).collect();
        if p == order {
            ngrams.push((toks, v));
        } else if p == 1 {
            unigrams.push((toks[0].clone(), v));
        }
    }
    if ngrams.is_empty() && (order != 2 || unigrams.is_empty()) {
        return Err(Error::DecodeEmpty);
    }
    DeBruijnGraph::from_ngrams(order, &ngrams, &unigrams, multiplicity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderWeights {
    pub w_est: f64,
    pub w_lm: f64,
    pub w_bp: f64,
    pub w_fc: f64,
    /// Sharpness of the brevity term.
    pub alpha: f64,
    /// Mean target length over mean source length of the training corpus.
    pub l_r: f64,
}

impl Default for DecoderWeights {
    fn default() -> Self {
        DecoderWeights {
            w_est: 1.0,
            w_lm: 1.0,
            w_bp: 1.0,
            w_fc: 1.0,
            alpha: 1.0,
            l_r: 1.0,
        }
    }
}

impl DecoderWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_est, self.w_lm, self.w_bp, self.w_fc, self.alpha, self.l_r];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("decoder weights", "must be finite"));
        }
        if self.l_r <= 0.0 {
            return Err(Error::config("l_r", "must be positive"));
        }
        Ok(())
    }

    pub fn score(&self, f: &PathFeatures) -> f64 {
        self.w_est * f.est_weight + self.w_lm * f.lm_logprob + self.w_bp * f.brevity + self.w_fc * f.future_cost
    }

    fn get(&self, k: usize) -> f64 {
        [self.w_est, self.w_lm, self.w_bp, self.w_fc][k]
    }

    fn set(&mut self, k: usize, v: f64) {
        match k {
            0 => self.w_est = v,
            1 => self.w_lm = v,
            2 => self.w_bp = v,
            _ => self.w_fc = v,
        }
    }

    /// Same weights multiplied by `c`; `alpha` and `l_r` are untouched.
    pub fn scaled(&self, c: f64) -> Self {
        DecoderWeights {
            w_est: self.w_est * c,
            w_lm: self.w_lm * c,
            w_bp: self.w_bp * c,
            w_fc: self.w_fc * c,
            ..*self
        }
    }
}

/// `exp(alpha * (l_R - |s| / |path|))`, zero for an empty path.
pub fn brevity(alpha: f64, l_r: f64, src_len: usize, path_len: usize) -> f64 {
    if path_len == 0 {
        0.0
    } else {
        (alpha * (l_r - src_len as f64 / path_len as f64)).exp()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PathFeatures {
    pub est_weight: f64,
    pub lm_logprob: f64,
    pub brevity: f64,
    pub future_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathHypothesis {
    pub node: usize,
    pub emitted: Vec<String>,
    /// Times each edge has been taken.
    pub used: Vec<u32>,
    pub features: PathFeatures,
    pub score: f64,
    lm_state: LmState,
}

impl PathHypothesis {
    pub fn fresh(graph: &DeBruijnGraph, lm: &LmModel) -> Self {
        PathHypothesis {
            node: START,
            emitted: Vec::new(),
            used: vec![0; graph.edges.len()],
            features: PathFeatures::default(),
            score: 0.0,
            lm_state: lm.start(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.node == END
    }
}

/// Summed weight (times remaining uses) of unconsumed edges reachable from
/// the hypothesis' node through unconsumed edges.
pub fn future_cost(graph: &DeBruijnGraph, hyp: &PathHypothesis) -> f64 {
    reachable_weight(graph, hyp.node, &hyp.used)
}

fn reachable_weight(graph: &DeBruijnGraph, from: usize, used: &[u32]) -> f64 {
    let mut seen = vec![false; graph.nodes.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    let mut total = 0.0;
    while let Some(v) = queue.pop_front() {
        for &e in &graph.out[v] {
            let edge = &graph.edges[e];
            let left = edge.multiplicity.saturating_sub(used[e]);
            if left == 0 {
                continue;
            }
            total += edge.weight * left as f64;
            if !seen[edge.to] {
                seen[edge.to] = true;
                queue.push_back(edge.to);
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beam: usize,
    pub max_len: usize,
}

/// Ranked output of one search.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub hypotheses: Vec<PathHypothesis>,
    /// False when no path reached `</s>` or the length limit and the best
    /// stuck partial path is returned instead.
    pub complete: bool,
}

impl SearchResult {
    pub fn best(&self) -> Option<Sentence> {
        self.hypotheses.first().map(|h| Sentence::from_tokens(&h.emitted))
    }

    pub fn sentences(&self) -> Vec<Sentence> {
        self.hypotheses.iter().map(|h| Sentence::from_tokens(&h.emitted)).collect()
    }
}

struct Scorer<'a> {
    graph: &'a DeBruijnGraph,
    weights: &'a DecoderWeights,
    lm: &'a LmModel,
    src_len: usize,
}

impl Scorer<'_> {
    fn extend(&self, h: &PathHypothesis, e: usize, max_len: usize) -> PathHypothesis {
        let edge = &self.graph.edges[e];
        let mut next = PathHypothesis {
            node: edge.to,
            emitted: h.emitted.clone(),
            used: h.used.clone(),
            features: h.features,
            score: 0.0,
            lm_state: h.lm_state.clone(),
        };
        self.graph.consume(&mut next.used, e);
        next.features.est_weight += edge.weight;
        for t in &edge.emit {
            next.features.lm_logprob += self.lm.advance(&mut next.lm_state, t);
            next.emitted.push(t.clone());
        }
        if edge.to == END || next.emitted.len() >= max_len {
            next.features.lm_logprob += self.lm.end_logprob(&next.lm_state);
            next.node = END;
            next.features.future_cost = 0.0;
        } else {
            next.features.future_cost = reachable_weight(self.graph, next.node, &next.used);
        }
        next.features.brevity = brevity(self.weights.alpha, self.weights.l_r, self.src_len, next.emitted.len());
        next.score = self.weights.score(&next.features);
        next
    }
}

fn rank(hyps: &mut [PathHypothesis]) {
    hyps.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.emitted.cmp(&b.emitted)));
}

/// Beam search from `<s>`. A path completes on `</s>` or once it has
/// emitted `max_len` tokens.
pub fn search(graph: &DeBruijnGraph, weights: &DecoderWeights, lm: &LmModel, src_len: usize, cfg: &SearchConfig) -> Result<SearchResult> {
    if cfg.beam == 0 || cfg.max_len == 0 {
        return Err(Error::InvalidArgument("beam and max_len must be at least 1".into()));
    }
    let scorer = Scorer {
        graph,
        weights,
        lm,
        src_len,
    };
    let mut fresh = PathHypothesis::fresh(graph, lm);
    fresh.features.future_cost = future_cost(graph, &fresh);
    fresh.score = weights.score(&fresh.features);

    let mut active = vec![fresh];
    let mut complete = Vec::new();
    let mut stuck = Vec::new();
    while !active.is_empty() {
        let mut next = Vec::new();
        for h in &active {
            let mut extended = false;
            for &e in &graph.out[h.node] {
                if h.used[e] >= graph.edges[e].multiplicity {
                    continue;
                }
                extended = true;
                let n = scorer.extend(h, e, cfg.max_len);
                if n.is_complete() {
                    complete.push(n);
                } else {
                    next.push(n);
                }
            }
            if !extended && h.node != START {
                stuck.push(h.clone());
            }
        }
        rank(&mut next);
        next.truncate(cfg.beam);
        active = next;
    }
    if complete.is_empty() {
        rank(&mut stuck);
        return Ok(SearchResult {
            hypotheses: stuck,
            complete: false,
        });
    }
    rank(&mut complete);
    Ok(SearchResult {
        hypotheses: complete,
        complete: true,
    })
}

/// Used when nothing clears the decode threshold: the `max_tokens`
/// highest-valued predicted unigrams, ordered greedily by the language model.
pub fn fallback_sentence(yhat: &SparseVector<f64>, tgt_index: &FeatureIndex, lm: &LmModel, max_tokens: usize) -> Sentence {
    let mut unigrams: Vec<(&str, f64)> = yhat
        .iter()
        .filter(|&(c, v)| v > 0.0 && c < tgt_index.len() && tgt_index.order_of(c) == 1)
        .map(|(c, v)| (tgt_index.feature(c), v))
        .collect();
    unigrams.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    unigrams.truncate(max_tokens);
    let mut pool: Vec<&str> = unigrams.into_iter().map(|(u, _)| u).collect();
    let mut out: Vec<&str> = Vec::new();
    while !pool.is_empty() {
        let (i, _) = pool
            .iter()
            .enumerate()
            .map(|(i, w)| (i, lm.prob(&out, w)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        out.push(pool.remove(i));
    }
    Sentence::from_tokens(&out)
}

/// Coordinate ascent over the four feature weights: each sweep tries every
/// grid value for one weight with the others fixed and keeps a change only if
/// it strictly improves `eval`.
pub fn tune_weights(initial: DecoderWeights, rounds: usize, grid: &[f64], mut eval: impl FnMut(&DecoderWeights) -> f64) -> (DecoderWeights, f64) {
    let mut best = initial;
    let mut best_score = eval(&best);
    for _ in 0..rounds {
        let mut changed = false;
        for k in 0..4 {
            for &v in grid {
                if v == best.get(k) {
                    continue;
                }
                let mut cand = best;
                cand.set(k, v);
                let s = eval(&cand);
                if s > best_score {
                    best = cand;
                    best_score = s;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (best, best_score)
}

/// Per-hypothesis record for decoder traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tokens: String,
    pub features: PathFeatures,
    pub score: f64,
}

pub fn trace(result: &SearchResult) -> Vec<TraceEntry> {
    result
        .hypotheses
        .iter()
        .map(|h| TraceEntry {
            tokens: h.emitted.join(" "),
            features: h.features,
            score: h.score,
        })
        .collect()
}
