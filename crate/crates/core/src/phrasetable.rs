//! Moses-style phrase tables read off a mapping matrix.
//!
//! For a test sentence S, every source feature s_f of S is paired with the
//! target features t_f that have a positive weight in its column:
//!
//! * `p(t_f|s_f) = W[t_f,s_f] / sum of positive W[., s_f]`
//! * `p(s_f|t_f) = W[t_f,s_f] / sum over positive W[t_f, s'] with s' in S`
//!
//! Lines are written as `s_f ||| t_f ||| p_inv p_dir 2.718`: inverse
//! probability first, then direct, then the constant phrase penalty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::features::ngram_counts;
use crate::regression::MappingMatrix;
use crate::scalar::Scalar;

pub const PHRASE_PENALTY: &str = "2.718";

/// Default per-source entry limit, as in Moses' translation table limit.
pub const DEFAULT_TABLE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseTableEntry {
    pub src_phrase: String,
    pub tgt_phrase: String,
    pub p_inv: f64,
    pub p_dir: f64,
}

impl PhraseTableEntry {
    pub fn to_line(&self) -> String {
        format!("{} ||| {} ||| {} {} {PHRASE_PENALTY}", self.src_phrase, self.tgt_phrase, self.p_inv, self.p_dir)
    }
}

/// Entries for the source features of `s`, sorted by source phrase, then
/// descending direct probability, then target phrase.
pub fn derive_entries<T: Scalar>(w: &MappingMatrix<T>, s: &Sentence) -> Vec<PhraseTableEntry> {
    let src_cols: BTreeSet<usize> = ngram_counts(&s.tokens, w.src_index.order_max())
        .keys()
        .filter_map(|f| w.src_index.col(f))
        .filter(|&c| c < w.cols())
        .collect();

    let mut inv_den: BTreeMap<usize, f64> = BTreeMap::new();
    for &c in &src_cols {
        for &(r, v) in w.column(c) {
            if v > T::zero() {
                *inv_den.entry(r).or_insert(0.0) += v.as_f64();
            }
        }
    }

    let mut entries = Vec::new();
    for &c in &src_cols {
        let positive: Vec<(usize, f64)> = w
            .column(c)
            .iter()
            .filter(|(_, v)| *v > T::zero())
            .map(|&(r, v)| (r, v.as_f64()))
            .collect();
        let dir_den: f64 = positive.iter().map(|(_, v)| v).sum();
        for (r, v) in positive {
            entries.push(PhraseTableEntry {
                src_phrase: w.src_index.feature(c).to_string(),
                tgt_phrase: w.tgt_index.feature(r).to_string(),
                p_inv: (v / inv_den[&r]).min(1.0),
                p_dir: (v / dir_den).min(1.0),
            });
        }
    }
    sort_entries(&mut entries);
    entries
}

pub fn sort_entries(entries: &mut [PhraseTableEntry]) {
    entries.sort_by(|a, b| {
        a.src_phrase
            .cmp(&b.src_phrase)
            .then(b.p_dir.total_cmp(&a.p_dir))
            .then_with(|| a.tgt_phrase.cmp(&b.tgt_phrase))
    });
}

/// Keeps the first `limit` entries of every source phrase; input must be
/// sorted as by [`sort_entries`].
pub fn truncate_per_source(entries: Vec<PhraseTableEntry>, limit: usize) -> Vec<PhraseTableEntry> {
    let mut kept = Vec::with_capacity(entries.len());
    let mut run = 0;
    for (i, e) in entries.iter().enumerate() {
        run = if i > 0 && entries[i - 1].src_phrase == e.src_phrase { run + 1 } else { 0 };
        if run < limit {
            kept.push(e.clone());
        }
    }
    kept
}

pub fn format_moses(entries: &[PhraseTableEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{}", e.to_line());
    }
    out
}

pub fn write_moses(entries: &[PhraseTableEntry], path: &Path) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!("no phrase table entries for {}", path.display())));
    }
    std::fs::write(path, format_moses(entries)).map_err(|e| Error::io(path, e))
}

pub fn parse_moses(text: &str) -> Result<Vec<PhraseTableEntry>> {
    let bad = |line: usize, message: &str| Error::Parse {
        path: "<phrase table>".into(),
        line,
        message: message.into(),
    };
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(" ||| ").collect();
        if fields.len() != 3 {
            return Err(bad(i + 1, "expected three ` ||| `-separated fields"));
        }
        let scores: Vec<&str> = fields[2].split(' ').collect();
        if scores.len() != 3 || scores[2] != PHRASE_PENALTY {
            return Err(bad(i + 1, "expected `p_inv p_dir 2.718`"));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad probability"));
        entries.push(PhraseTableEntry {
            src_phrase: fields[0].to_string(),
            tgt_phrase: fields[1].to_string(),
            p_inv: p(scores[0])?,
            p_dir: p(scores[1])?,
        });
    }
    Ok(entries)
}

/// Which table file belongs to which test sentence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhraseTableManifest {
    pub tables: BTreeMap<usize, String>,
    /// Test sentences whose tables came out empty.
    pub empty: Vec<usize>,
    pub limit: Option<usize>,
}
