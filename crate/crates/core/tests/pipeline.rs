use std::fs;
use std::path::Path;

use regmt::config::{ExperimentConfig, SolverName};
use regmt::corpus::{load_parallel, SplitManifest};
use regmt::phrasetable::{parse_moses, PhraseTableManifest};
use regmt::pipeline::{cmd_export_pt, cmd_prepare, cmd_run, eval_files, CORPUS_SRC, CORPUS_TGT, PHRASE_TABLE_DIR, REPORT_CSV, REPORT_JSON, SPLIT_MANIFEST};
use regmt::Error;

/// Small synthetic experiment that finishes in a few seconds.
fn small(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        out_dir: dir.to_path_buf(),
        synth_pairs: 500,
        synth_vocab: 60,
        split_per_bucket: 3,
        m_values: vec![40],
        lambda_grid: vec![0.1, 1.0],
        fsr_iters_grid: vec![100, 400],
        dev_limit: 4,
        test_limit: 4,
        decoder_grid: vec![0.0, 1.0],
        seed: 3,
        ..ExperimentConfig::default()
    }
}

#[test]
fn prepare_writes_corpus_and_disjoint_split() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let prepared = cmd_prepare(&cfg).unwrap();
    let loaded = load_parallel(&tmp.path().join(CORPUS_SRC), &tmp.path().join(CORPUS_TGT)).unwrap();
    assert_eq!(loaded.corpus.len(), cfg.synth_pairs);
    assert_eq!(loaded.corpus, prepared.corpus);

    let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(tmp.path().join(SPLIT_MANIFEST)).unwrap()).unwrap();
    let mut all: Vec<usize> = [&manifest.train, &manifest.dev, &manifest.dev2, &manifest.test].into_iter().flatten().copied().collect();
    let n = all.len();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), n, "split sets overlap");
    assert!(!manifest.test.is_empty() && !manifest.dev.is_empty());
}

#[test]
fn prepare_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_prepare(&small(a.path())).unwrap();
    cmd_prepare(&small(b.path())).unwrap();
    for f in [CORPUS_SRC, CORPUS_TGT, SPLIT_MANIFEST] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_corpus_path_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        source_path: Some(tmp.path().join("nope.src")),
        target_path: Some(tmp.path().join("nope.tgt")),
        ..small(tmp.path())
    };
    assert!(matches!(cmd_prepare(&cfg), Err(Error::Config { .. })));
}

#[test]
fn run_without_prepare_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(cmd_run(&small(tmp.path())), Err(Error::Config { .. })));
}

#[test]
fn run_sweeps_every_m_and_solver() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        m_values: vec![20, 40, 80],
        ..small(tmp.path())
    };
    cmd_prepare(&cfg).unwrap();
    let report = cmd_run(&cfg).unwrap();
    assert_eq!(report.runs.len(), 6);
    assert_eq!(report.failures(), 0);
    for m in [20, 40, 80] {
        for solver in [SolverName::Ridge, SolverName::Fsr] {
            let row = &report.runs.iter().find(|r| r.row.m == m && r.row.solver == solver.name()).unwrap().row;
            assert!((0.0..=1.0).contains(&row.f1) && (0.0..=1.0).contains(&row.bleu));
            let tag = format!("{}.m{m}", solver.name());
            let hyps = fs::read_to_string(tmp.path().join(format!("hyp.{tag}.txt"))).unwrap();
            assert_eq!(hyps.lines().count(), row.sentences);
            assert!(tmp.path().join(format!("weights.{tag}.json")).exists());
        }
        assert!(tmp.path().join(format!("selection.m{m}.json")).exists());
    }

    let csv = fs::read_to_string(tmp.path().join(REPORT_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("config_hash,selector,m,solver"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(json["config_hash"], cfg.hash());
    assert_eq!(json["runs"].as_array().unwrap().len(), 6);
}

#[test]
fn stagewise_mappings_are_sparser_than_ridge() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    cmd_prepare(&cfg).unwrap();
    let report = cmd_run(&cfg).unwrap();
    let nnz = |s: &str| report.runs.iter().find(|r| r.row.solver == s).unwrap().row.mean_nnz;
    assert!(nnz("fsr") < nnz("ridge"));
}

#[test]
fn dump_artifacts_writes_matrices_and_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        solvers: vec![SolverName::Fsr],
        dump_artifacts: true,
        ..small(tmp.path())
    };
    cmd_prepare(&cfg).unwrap();
    cmd_run(&cfg).unwrap();
    assert!(tmp.path().join("lm.txt").exists());
    assert!(tmp.path().join("trace.fsr.m40.json").exists());
    let dumped: Vec<_> = fs::read_dir(tmp.path().join("matrices").join("fsr.m40")).unwrap().collect();
    assert_eq!(dumped.len(), 5 * cfg.test_limit);
}

#[test]
fn export_writes_truncated_tables_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        export_solver: SolverName::Ridge,
        ..small(tmp.path())
    };
    cmd_prepare(&cfg).unwrap();
    let manifest = cmd_export_pt(&cfg).unwrap();
    assert_eq!(manifest.tables.len() + manifest.empty.len(), cfg.test_limit);
    assert_eq!(manifest.limit, Some(cfg.table_limit));
    let dir = tmp.path().join(PHRASE_TABLE_DIR);
    let on_disk: PhraseTableManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    for file in manifest.tables.values() {
        let entries = parse_moses(&fs::read_to_string(dir.join(file)).unwrap()).unwrap();
        assert!(!entries.is_empty());
        let mut per_source = std::collections::HashMap::new();
        for e in &entries {
            *per_source.entry(&e.src_phrase).or_insert(0) += 1;
        }
        assert!(per_source.values().all(|&n| n <= cfg.table_limit));
    }
}

#[test]
fn eval_files_scores_identical_files_as_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (h, r) = (tmp.path().join("h"), tmp.path().join("r"));
    fs::write(&h, "a b c d e\nf g h i\n").unwrap();
    fs::write(&r, "a b c d e\nf g h i\n").unwrap();
    assert!((eval_files(&h, &r, 4).unwrap() - 1.0).abs() < 1e-12);
    fs::write(&r, "a b c d e\n").unwrap();
    assert!(eval_files(&h, &r, 4).is_err());
}
