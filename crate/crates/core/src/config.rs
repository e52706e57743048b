//! Experiment configuration: a flat TOML file plus `key=value` overrides.
//!
//! Precedence is overrides > file > defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{SplitConfig, Substitution, SynthSpec};
use crate::decoder::Multiplicity;
use crate::error::{Error, Result};
use crate::features::Weighting;
use crate::selection::{Denominator, SelectionConfig, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Ridge,
    Fsr,
}

impl SolverName {
    pub fn name(self) -> &'static str {
        match self {
            SolverName::Ridge => "ridge",
            SolverName::Fsr => "fsr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Source side of a line-aligned corpus; when both paths are unset,
    /// `prepare` generates a synthetic cipher corpus instead.
    pub source_path: Option<PathBuf>,
    pub target_path: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub synth_pairs: usize,
    pub synth_vocab: usize,
    pub synth_identity: bool,
    pub synth_reorder_window: usize,
    pub synth_reorder_prob: f64,
    pub synth_min_len: usize,
    pub synth_max_len: usize,
    pub synth_zipf: f64,

    pub split_len_min: usize,
    pub split_len_max: usize,
    pub split_cov_min: f64,
    pub split_cov_max: f64,
    pub split_per_bucket: usize,

    pub feature_order: usize,
    pub weighting: Weighting,

    pub selector: Selector,
    /// Instances per test sentence; more than one value gives a learning curve.
    pub m_values: Vec<usize>,
    pub dice_order: usize,
    pub dice_denominator: Denominator,

    pub solvers: Vec<SolverName>,
    pub lambda_grid: Vec<f64>,
    pub fsr_step: f64,
    pub fsr_iters_grid: Vec<usize>,
    /// Dev sentences used for tuning; 0 uses all of them.
    pub dev_limit: usize,
    /// Test sentences evaluated; 0 uses all of them.
    pub test_limit: usize,

    pub lm_order: usize,
    pub decode_order: usize,
    /// Fixed graph threshold; unset uses the threshold tuned for F1.
    pub decode_threshold: Option<f64>,
    pub multiplicity: Multiplicity,
    pub beam: usize,
    pub alpha: f64,
    pub decoder_rounds: usize,
    pub decoder_grid: Vec<f64>,
    pub bleu_order: usize,

    pub export_solver: SolverName,
    pub export_lambda: f64,
    pub export_fsr_iters: usize,
    /// Entries kept per source phrase; 0 keeps all.
    pub table_limit: usize,

    /// Write feature indices, matrices, the LM dump and decoder traces.
    pub dump_artifacts: bool,
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let split = SplitConfig::default();
        let synth = SynthSpec::default();
        ExperimentConfig {
            source_path: None,
            target_path: None,
            out_dir: PathBuf::from("out"),
            synth_pairs: 2500,
            synth_vocab: synth.vocab_size,
            synth_identity: false,
            synth_reorder_window: synth.reorder_window,
            synth_reorder_prob: synth.reorder_prob,
            synth_min_len: synth.min_len,
            synth_max_len: synth.max_len,
            synth_zipf: synth.zipf,
            split_len_min: split.len_range.0,
            split_len_max: split.len_range.1,
            split_cov_min: split.cov_range.0,
            split_cov_max: split.cov_range.1,
            split_per_bucket: split.per_bucket,
            feature_order: 2,
            weighting: Weighting::Spectrum,
            selector: Selector::Dice,
            m_values: vec![100],
            dice_order: 2,
            dice_denominator: Denominator::Product,
            solvers: vec![SolverName::Ridge, SolverName::Fsr],
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0],
            fsr_step: 0.01,
            fsr_iters_grid: vec![250, 1000, 4000],
            dev_limit: 20,
            test_limit: 0,
            lm_order: 3,
            decode_order: 2,
            decode_threshold: None,
            multiplicity: Multiplicity::Rounded,
            beam: 8,
            alpha: 1.0,
            decoder_rounds: 1,
            decoder_grid: vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0],
            bleu_order: 4,
            export_solver: SolverName::Fsr,
            export_lambda: 1.0,
            export_fsr_iters: 1000,
            table_limit: 20,
            dump_artifacts: false,
            seed: 0,
            workers: 0,
        }
    }
}

fn parse_override(raw: &str) -> Result<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::config(raw, "override must look like key=value"))?;
    let key = key.trim().to_string();
    let value = value.trim();
    // numbers, booleans and arrays parse as TOML; anything else is a string
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `overrides`, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::config(p.display().to_string(), e.message().to_string()))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (k, v) = parse_override(raw)?;
            table.insert(k, v);
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::config(field, msg));
        if self.source_path.is_some() != self.target_path.is_some() {
            return fail("source_path", "source_path and target_path must be given together");
        }
        if self.synth_pairs == 0 {
            return fail("synth_pairs", "must be at least 1");
        }
        if self.synth_vocab < 2 {
            return fail("synth_vocab", "must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.synth_reorder_prob) {
            return fail("synth_reorder_prob", "must be in [0, 1]");
        }
        if self.synth_min_len == 0 || self.synth_min_len > self.synth_max_len {
            return fail("synth_min_len", "need 1 <= synth_min_len <= synth_max_len");
        }
        if !(self.synth_zipf >= 0.0) {
            return fail("synth_zipf", "must be non-negative");
        }
        if self.split_len_min > self.split_len_max {
            return fail("split_len_min", "must not exceed split_len_max");
        }
        let (lo, hi) = (self.split_cov_min, self.split_cov_max);
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return fail("split_cov_min", "need 0 <= split_cov_min < split_cov_max <= 1");
        }
        if self.split_per_bucket == 0 {
            return fail("split_per_bucket", "must be at least 1");
        }
        if self.feature_order == 0 {
            return fail("feature_order", "must be at least 1");
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return fail("m_values", "must be a non-empty list of positive counts");
        }
        if self.dice_order == 0 {
            return fail("dice_order", "must be at least 1");
        }
        if self.solvers.is_empty() {
            return fail("solvers", "must name at least one solver");
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return fail("lambda_grid", "must be a non-empty list of positive values");
        }
        if !(self.fsr_step > 0.0) || !self.fsr_step.is_finite() {
            return fail("fsr_step", "must be positive");
        }
        if self.fsr_iters_grid.is_empty() {
            return fail("fsr_iters_grid", "must not be empty");
        }
        if self.lm_order == 0 {
            return fail("lm_order", "must be at least 1");
        }
        if self.decode_order < 2 || self.decode_order > self.feature_order {
            return fail("decode_order", "must be at least 2 and at most feature_order");
        }
        if self.decode_threshold.is_some_and(|t| !t.is_finite()) {
            return fail("decode_threshold", "must be finite");
        }
        if self.beam == 0 {
            return fail("beam", "must be at least 1");
        }
        if !self.alpha.is_finite() {
            return fail("alpha", "must be finite");
        }
        if self.decoder_grid.iter().any(|g| !g.is_finite()) {
            return fail("decoder_grid", "must be finite");
        }
        if self.bleu_order == 0 {
            return fail("bleu_order", "must be at least 1");
        }
        if !(self.export_lambda > 0.0) {
            return fail("export_lambda", "must be positive");
        }
        Ok(())
    }

    /// Checks that configured corpus files exist.
    pub fn validate_paths(&self) -> Result<()> {
        for (field, p) in [("source_path", &self.source_path), ("target_path", &self.target_path)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the resolved config as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            len_range: (self.split_len_min, self.split_len_max),
            cov_range: (self.split_cov_min, self.split_cov_max),
            per_bucket: self.split_per_bucket,
            seed: self.seed,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            vocab_size: self.synth_vocab,
            substitution: if self.synth_identity {
                Substitution::Identity
            } else {
                Substitution::Permutation
            },
            reorder_window: self.synth_reorder_window,
            reorder_prob: self.synth_reorder_prob,
            min_len: self.synth_min_len,
            max_len: self.synth_max_len,
            zipf: self.synth_zipf,
            seed: self.seed,
        }
    }

    pub fn selection_config(&self, m: usize) -> SelectionConfig {
        SelectionConfig {
            m,
            feature_order: self.dice_order,
            denominator: self.dice_denominator,
            ..SelectionConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, "beam = 4\nseed = 3\nsolvers = [\"fsr\"]\n").unwrap();
        let cfg = ExperimentConfig::load(Some(&p), &["beam=16".into(), "out_dir=runs/a".into()]).unwrap();
        assert_eq!((cfg.beam, cfg.seed), (16, 3));
        assert_eq!(cfg.solvers, vec![SolverName::Fsr]);
        assert_eq!(cfg.out_dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn list_overrides() {
        let cfg = ExperimentConfig::load(None, &["m_values=[50, 100, 250]".into()]).unwrap();
        assert_eq!(cfg.m_values, vec![50, 100, 250]);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::load(None, &["bem=3".into()]).unwrap_err();
        assert!(err.to_string().contains("bem"), "{err}");
    }

    #[test]
    fn invalid_value_names_field() {
        let err = ExperimentConfig::load(None, &["beam=0".into()]).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "beam"));
    }

    #[test]
    fn missing_corpus_path_reported() {
        let cfg = ExperimentConfig::load(None, &["source_path=/nonexistent/a".into(), "target_path=/nonexistent/b".into()]).unwrap();
        assert!(matches!(cfg.validate_paths(), Err(Error::Config { field, .. }) if field == "source_path"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
