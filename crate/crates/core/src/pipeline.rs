//! End-to-end experiment driver behind the command-line tool.
//!
//! `prepare` writes a normalized corpus and split manifest into the output
//! directory; `run` and `export-pt` read them back. For every test sentence a
//! training set is selected, matrices are built over it, a mapping is fitted
//! and the prediction is evaluated at the feature level and decoded.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SolverName};
use crate::corpus::{load_parallel, select_eval_split, synth_generate, write_parallel, DataSplit, ParallelCorpus, Sentence, SplitManifest};
use crate::decoder::{build_graph, fallback_sentence, search, trace, tune_weights, DeBruijnGraph, DecoderWeights, SearchConfig, TraceEntry};
use crate::error::{Error, Result};
use crate::evaluation::{bleu, bleu_smoothed, tune_fsr_iters, tune_lambda, tune_threshold, EvalReport, Scored, SentenceEval, Threshold};
use crate::features::{build_matrices, coverage, feature_set, FeatureIndex, SparseVector, TrainingMatrices};
use crate::lm::LmModel;
use crate::phrasetable::{derive_entries, truncate_per_source, write_moses, PhraseTableManifest};
use crate::regression::{fit_fsr, fit_ridge, predict, FsrConfig, MappingMatrix, RidgeConfig};
use crate::selection::{build_cooccurrence, CooccurrenceTable, ScoredId, SelectionRecord};

pub const CORPUS_SRC: &str = "corpus.src";
pub const CORPUS_TGT: &str = "corpus.tgt";
pub const SPLIT_MANIFEST: &str = "split.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs `f` on a pool of `workers` threads (0 = available parallelism).
fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: ParallelCorpus,
    pub split: DataSplit,
    pub warnings: Vec<String>,
}

/// Loads or generates the corpus, draws the evaluation split and writes
/// `corpus.src`, `corpus.tgt` and `split.json` into the output directory.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    cfg.validate_paths()?;
    create_dir(&cfg.out_dir)?;
    let corpus = match (&cfg.source_path, &cfg.target_path) {
        (Some(s), Some(t)) => load_parallel(s, t)?.corpus,
        _ => synth_generate(&cfg.synth_spec(), cfg.synth_pairs)?.corpus,
    };
    log::info!("corpus has {} pairs", corpus.len());
    write_parallel(&corpus, &cfg.out_dir.join(CORPUS_SRC), &cfg.out_dir.join(CORPUS_TGT))?;
    let outcome = select_eval_split(&corpus, &cfg.split_config())?;
    write_json(&cfg.out_dir.join(SPLIT_MANIFEST), &outcome.split.manifest(&outcome.warnings))?;
    log::info!(
        "split: {} train, {} dev, {} dev2, {} test",
        outcome.split.train.len(),
        outcome.split.dev.len(),
        outcome.split.dev2.len(),
        outcome.split.test.len()
    );
    Ok(Prepared {
        corpus,
        split: outcome.split,
        warnings: outcome.warnings,
    })
}

/// Reads back what `prepare` wrote.
pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared> {
    let manifest_path = cfg.out_dir.join(SPLIT_MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::config("out_dir", format!("{} has no prepared split; run prepare first", cfg.out_dir.display())));
    }
    let corpus = load_parallel(&cfg.out_dir.join(CORPUS_SRC), &cfg.out_dir.join(CORPUS_TGT))?.corpus;
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: SplitManifest = serde_json::from_str(&text)?;
    let split = DataSplit::from_manifest(&corpus, &manifest);
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::config("out_dir", "prepared split has an empty train or test set"));
    }
    Ok(Prepared {
        corpus,
        split,
        warnings: manifest.warnings,
    })
}

/// A solver with concrete hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum SolverSetting {
    Ridge { lambda: f64 },
    Fsr { step_eps: f64, max_iters: usize },
}

impl SolverSetting {
    pub fn fit(&self, mats: &TrainingMatrices<f64>) -> Result<MappingMatrix<f64>> {
        match *self {
            SolverSetting::Ridge { lambda } => fit_ridge(&mats.src, &mats.tgt, &RidgeConfig { lambda }),
            SolverSetting::Fsr { step_eps, max_iters } => fit_fsr(
                &mats.src,
                &mats.tgt,
                &FsrConfig {
                    step_eps,
                    max_iters,
                    tol: 0.0,
                },
            ),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverSetting::Ridge { .. } => "ridge",
            SolverSetting::Fsr { .. } => "fsr",
        }
    }

    /// Hyperparameter as a short `key=value` label.
    pub fn label(&self) -> String {
        match self {
            SolverSetting::Ridge { lambda } => format!("lambda={lambda}"),
            SolverSetting::Fsr { max_iters, .. } => format!("iters={max_iters}"),
        }
    }
}

/// One evaluation sentence with its selected training set.
struct Instance {
    id: usize,
    source: Sentence,
    target: Sentence,
    selected: Vec<ScoredId>,
    mats: std::result::Result<TrainingMatrices<f64>, String>,
    scov: f64,
    tcov: f64,
}

fn build_instances(eval: &ParallelCorpus, train: &ParallelCorpus, table: &CooccurrenceTable, cfg: &ExperimentConfig, m: usize) -> Vec<Instance> {
    let sel_cfg = cfg.selection_config(m);
    eval.pairs()
        .par_iter()
        .map(|p| {
            let selected = cfg.selector.select(&p.source, train, table, &sel_cfg, cfg.seed ^ p.id as u64);
            let ids: Vec<usize> = selected.iter().map(|s| s.id).collect();
            let chosen = train.subset(&ids);
            let order = cfg.feature_order;
            let scov = coverage(&feature_set([&p.source], order), &feature_set(chosen.sources(), order)).unwrap_or(0.0);
            let tcov = coverage(&feature_set([&p.target], order), &feature_set(chosen.targets(), order)).unwrap_or(0.0);
            Instance {
                id: p.id,
                source: p.source.clone(),
                target: p.target.clone(),
                scov,
                tcov,
                mats: build_matrices(&chosen, cfg.feature_order, cfg.weighting).map_err(|e| e.to_string()),
                selected,
            }
        })
        .collect()
}

struct Prediction {
    w: MappingMatrix<f64>,
    yhat: SparseVector<f64>,
}

fn predict_instance(inst: &Instance, setting: &SolverSetting) -> std::result::Result<Prediction, String> {
    let mats = inst.mats.as_ref().map_err(Clone::clone)?;
    let w = setting.fit(mats).map_err(|e| e.to_string())?;
    let x = mats.src_index().extract::<f64>(&inst.source).vector;
    let yhat = predict(&w, &x);
    Ok(Prediction { w, yhat })
}

fn tgt_index(inst: &Instance) -> &FeatureIndex {
    inst.mats.as_ref().expect("predicted instances have matrices").tgt_index()
}

/// What the decoder works from for one sentence.
enum Plan {
    Graph(DeBruijnGraph),
    Fallback(Sentence),
}

struct DecodeSetup<'a> {
    lm: &'a LmModel,
    cfg: &'a ExperimentConfig,
    l_r: f64,
}

impl DecodeSetup<'_> {
    fn plan(&self, yhat: &SparseVector<f64>, index: &FeatureIndex, threshold: f64, src_len: usize) -> Result<Plan> {
        let thr = self.cfg.decode_threshold.unwrap_or(threshold);
        match build_graph(yhat, index, thr, self.cfg.decode_order, self.cfg.multiplicity) {
            Ok(g) => Ok(Plan::Graph(g)),
            Err(Error::DecodeEmpty) => {
                let n = ((self.l_r * src_len as f64).round() as usize).max(1);
                Ok(Plan::Fallback(fallback_sentence(yhat, index, self.lm, n)))
            }
            Err(e) => Err(e),
        }
    }

    fn decode(&self, plan: &Plan, weights: &DecoderWeights, src_len: usize) -> Result<(Sentence, Vec<TraceEntry>)> {
        match plan {
            Plan::Fallback(s) => Ok((s.clone(), Vec::new())),
            Plan::Graph(g) => {
                let sc = SearchConfig {
                    beam: self.cfg.beam,
                    max_len: 2 * src_len + 5,
                };
                let res = search(g, weights, self.lm, src_len, &sc)?;
                if !res.complete {
                    log::debug!("no complete path; using best partial");
                }
                Ok((res.best().unwrap_or_default(), trace(&res)))
            }
        }
    }
}

/// One row of the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config_hash: String,
    pub selector: String,
    pub m: usize,
    pub solver: String,
    pub hyper: String,
    pub threshold: f64,
    pub dev_f1: f64,
    pub ber: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
    pub macro_f1: f64,
    pub scov: f64,
    pub tcov: f64,
    pub bleu: f64,
    pub mean_nnz: f64,
    pub sentences: usize,
    pub failures: usize,
    pub weights: DecoderWeights,
}

/// Flat CSV view of a row with fixed float precision.
#[derive(Serialize)]
struct CsvRow<'a> {
    config_hash: &'a str,
    selector: &'a str,
    m: usize,
    solver: &'a str,
    hyper: &'a str,
    threshold: String,
    dev_f1: String,
    ber: String,
    prec: String,
    rec: String,
    f1: String,
    macro_f1: String,
    scov: String,
    tcov: String,
    bleu: String,
    mean_nnz: String,
    sentences: usize,
    failures: usize,
    w_est: f64,
    w_lm: f64,
    w_bp: f64,
    w_fc: f64,
}

impl ReportRow {
    fn csv_row(&self) -> CsvRow<'_> {
        let f = |x: f64| format!("{x:.6}");
        CsvRow {
            config_hash: &self.config_hash,
            selector: &self.selector,
            m: self.m,
            solver: &self.solver,
            hyper: &self.hyper,
            threshold: f(self.threshold),
            dev_f1: f(self.dev_f1),
            ber: f(self.ber),
            prec: f(self.prec),
            rec: f(self.rec),
            f1: f(self.f1),
            macro_f1: f(self.macro_f1),
            scov: f(self.scov),
            tcov: f(self.tcov),
            bleu: f(self.bleu),
            mean_nnz: format!("{:.2}", self.mean_nnz),
            sentences: self.sentences,
            failures: self.failures,
            w_est: self.weights.w_est,
            w_lm: self.weights.w_lm,
            w_bp: self.weights.w_bp,
            w_fc: self.weights.w_fc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub test_id: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub row: ReportRow,
    pub setting: SolverSetting,
    pub eval: EvalReport,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub split_warnings: Vec<String>,
    pub runs: Vec<RunRecord>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().map(|r| r.failures.len()).sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(r.row.csv_row()).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn limited(c: &ParallelCorpus, limit: usize) -> ParallelCorpus {
    if limit == 0 || c.len() <= limit {
        c.clone()
    } else {
        c.subset(&c.ids()[..limit])
    }
}

struct Tuned {
    setting: SolverSetting,
    threshold: f64,
    dev_f1: f64,
    /// Dev predictions under the chosen setting, by instance.
    dev_preds: Vec<Option<SparseVector<f64>>>,
}

fn tune_solver(solver: SolverName, dev: &[Instance], cfg: &ExperimentConfig) -> Result<Tuned> {
    let mut tried: Vec<(SolverSetting, f64, f64, Vec<Option<SparseVector<f64>>>)> = Vec::new();
    let mut evaluate = |setting: SolverSetting| -> f64 {
        let preds: Vec<Option<SparseVector<f64>>> = dev
            .par_iter()
            .map(|inst| predict_instance(inst, &setting).ok().map(|p| p.yhat))
            .collect();
        let items: Vec<Scored> = dev
            .iter()
            .zip(&preds)
            .filter_map(|(inst, p)| p.as_ref().map(|y| Scored::new(y.clone(), &inst.target, tgt_index(inst))))
            .collect();
        let (thr, f1) = match tune_threshold(&items) {
            Ok(c) => (c.threshold.0, c.f1),
            Err(_) => (0.0, 0.0),
        };
        log::info!("dev {} {}: F1 {f1:.4} at threshold {thr:.4}", setting.name(), setting.label());
        tried.push((setting, thr, f1, preds));
        f1
    };
    let chosen = match solver {
        SolverName::Ridge => {
            let (lambda, _) = tune_lambda(&cfg.lambda_grid, |lambda| evaluate(SolverSetting::Ridge { lambda }))?;
            SolverSetting::Ridge { lambda }
        }
        SolverName::Fsr => {
            let step_eps = cfg.fsr_step;
            let (max_iters, _) = tune_fsr_iters(&cfg.fsr_iters_grid, |max_iters| evaluate(SolverSetting::Fsr { step_eps, max_iters }))?;
            SolverSetting::Fsr { step_eps, max_iters }
        }
    };
    let (setting, threshold, dev_f1, dev_preds) = tried.into_iter().find(|t| t.0 == chosen).expect("chosen setting was evaluated");
    Ok(Tuned {
        setting,
        threshold,
        dev_f1,
        dev_preds,
    })
}

fn tune_decoder(tuned: &Tuned, dev: &[Instance], setup: &DecodeSetup) -> Result<DecoderWeights> {
    let initial = DecoderWeights {
        alpha: setup.cfg.alpha,
        l_r: setup.l_r,
        ..DecoderWeights::default()
    };
    initial.validate()?;
    if setup.cfg.decoder_rounds == 0 {
        return Ok(initial);
    }
    let mut plans = Vec::new();
    let mut refs = Vec::new();
    for (inst, pred) in dev.iter().zip(&tuned.dev_preds) {
        if let Some(y) = pred {
            plans.push((setup.plan(y, tgt_index(inst), tuned.threshold, inst.source.len())?, inst.source.len()));
            refs.push(inst.target.clone());
        }
    }
    if plans.is_empty() {
        return Ok(initial);
    }
    let (weights, score) = tune_weights(initial, setup.cfg.decoder_rounds, &setup.cfg.decoder_grid, |w| {
        let hyps: Vec<Sentence> = plans
            .par_iter()
            .map(|(plan, len)| setup.decode(plan, w, *len).map(|d| d.0).unwrap_or_default())
            .collect();
        bleu_smoothed(&hyps, &refs, setup.cfg.bleu_order).unwrap_or(0.0)
    });
    log::info!("dev smoothed BLEU after decoder tuning: {score:.4}");
    Ok(weights)
}

struct TestOutcome {
    id: usize,
    eval: Option<SentenceEval>,
    hyp: Sentence,
    nnz: usize,
    trace: Vec<TraceEntry>,
    error: Option<String>,
}

fn run_test_sentence(inst: &Instance, tuned: &Tuned, weights: &DecoderWeights, setup: &DecodeSetup, dump: Option<&Path>) -> TestOutcome {
    let mut out = TestOutcome {
        id: inst.id,
        eval: None,
        hyp: Sentence::default(),
        nnz: 0,
        trace: Vec::new(),
        error: None,
    };
    let pred = match predict_instance(inst, &tuned.setting) {
        Ok(p) => p,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    let index = tgt_index(inst);
    let scored = Scored::new(pred.yhat.clone(), &inst.target, index);
    let counts = scored.counts(Threshold(tuned.threshold));
    out.nnz = pred.w.nnz();
    out.eval = Some(SentenceEval {
        id: inst.id,
        counts,
        f1: crate::evaluation::metrics::<f64>(&counts).f1,
        scov: inst.scov,
        tcov: inst.tcov,
    });
    if let Some(dir) = dump {
        if let Err(e) = dump_instance(dir, inst, &pred.w) {
            out.error = Some(e.to_string());
        }
    }
    let decoded = setup
        .plan(&pred.yhat, index, tuned.threshold, inst.source.len())
        .and_then(|plan| setup.decode(&plan, weights, inst.source.len()));
    match decoded {
        Ok((hyp, tr)) => {
            out.hyp = hyp;
            out.trace = tr;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn dump_instance(dir: &Path, inst: &Instance, w: &MappingMatrix<f64>) -> Result<()> {
    let mats = inst.mats.as_ref().map_err(|e| Error::InvalidArgument(e.clone()))?;
    let base = |ext: &str| dir.join(format!("{}.{ext}", inst.id));
    write_file(&base("src.jsonl"), mats.src_index().to_jsonl())?;
    write_file(&base("tgt.jsonl"), mats.tgt_index().to_jsonl())?;
    write_file(&base("mx.coo"), mats.src.to_coo())?;
    write_file(&base("my.coo"), mats.tgt.to_coo())?;
    write_file(&base("w.coo"), w.to_coo())
}

fn join_lines(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.text());
        out.push('\n');
    }
    out
}

/// Full experiment: for every `m` and solver, tune on dev, then evaluate and
/// decode the test set. Writes `report.csv`, `report.json`, hypotheses,
/// decoder weights and selection manifests. Per-sentence failures are
/// recorded in the report rather than aborting the run.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let prepared = load_prepared(cfg)?;
    with_pool(cfg.workers, || run_prepared(cfg, &prepared))?
}

fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<RunReport> {
    let hash = cfg.hash();
    let out = &cfg.out_dir;
    let train = &prepared.split.train;
    let dev = limited(&prepared.split.dev, cfg.dev_limit);
    let test = limited(&prepared.split.test, cfg.test_limit);
    if dev.is_empty() {
        return Err(Error::config("dev_limit", "the prepared split has no dev sentences to tune on"));
    }
    let table = build_cooccurrence(train, cfg.dice_order)?;
    let lm = LmModel::train(train.targets(), cfg.lm_order)?;
    let setup = DecodeSetup {
        lm: &lm,
        cfg,
        l_r: train.length_ratio(),
    };
    if cfg.dump_artifacts {
        write_file(&out.join("lm.txt"), lm.to_text())?;
    }

    let mut runs = Vec::new();
    for &m in &cfg.m_values {
        log::info!("m = {m}: selecting for {} dev and {} test sentences", dev.len(), test.len());
        let dev_insts = build_instances(&dev, train, &table, cfg, m);
        let test_insts = build_instances(&test, train, &table, cfg, m);
        let records: Vec<SelectionRecord> = test_insts.iter().map(|i| SelectionRecord::new(i.id, cfg.selector, &i.selected)).collect();
        write_json(&out.join(format!("selection.m{m}.json")), &records)?;

        for &solver in &cfg.solvers {
            let tag = format!("{}.m{m}", solver.name());
            let tuned = tune_solver(solver, &dev_insts, cfg)?;
            let weights = tune_decoder(&tuned, &dev_insts, &setup)?;
            write_json(&out.join(format!("weights.{tag}.json")), &weights)?;

            let dump_dir = cfg.dump_artifacts.then(|| out.join("matrices").join(&tag));
            if let Some(d) = &dump_dir {
                create_dir(d)?;
            }
            let outcomes: Vec<TestOutcome> = test_insts
                .par_iter()
                .map(|inst| run_test_sentence(inst, &tuned, &weights, &setup, dump_dir.as_deref()))
                .collect();

            let hyps: Vec<Sentence> = outcomes.iter().map(|o| o.hyp.clone()).collect();
            let refs: Vec<Sentence> = test_insts.iter().map(|i| i.target.clone()).collect();
            write_file(&out.join(format!("hyp.{tag}.txt")), join_lines(&hyps))?;
            if cfg.dump_artifacts {
                let traces: Vec<(usize, &Vec<TraceEntry>)> = outcomes.iter().map(|o| (o.id, &o.trace)).collect();
                write_json(&out.join(format!("trace.{tag}.json")), &traces)?;
            }
            let failures: Vec<Failure> = outcomes
                .iter()
                .filter_map(|o| {
                    o.error.as_ref().map(|e| Failure {
                        test_id: o.id,
                        message: e.clone(),
                    })
                })
                .collect();
            for f in &failures {
                log::error!("{tag}: sentence {} failed: {}", f.test_id, f.message);
            }
            let evals: Vec<SentenceEval> = outcomes.iter().filter_map(|o| o.eval.clone()).collect();
            let n_ok = evals.len().max(1) as f64;
            let mean_nnz = outcomes.iter().map(|o| o.nnz).sum::<usize>() as f64 / n_ok;
            let report = EvalReport::from_sentences(evals);
            let bleu_score = bleu(&hyps, &refs, cfg.bleu_order)?;
            log::info!("test {tag} ({}): F1 {:.4} BLEU {:.4}", tuned.setting.label(), report.f1, bleu_score);
            runs.push(RunRecord {
                row: ReportRow {
                    config_hash: hash.clone(),
                    selector: cfg.selector.name().to_string(),
                    m,
                    solver: solver.name().to_string(),
                    hyper: tuned.setting.label(),
                    threshold: tuned.threshold,
                    dev_f1: tuned.dev_f1,
                    ber: report.ber,
                    prec: report.prec,
                    rec: report.rec,
                    f1: report.f1,
                    macro_f1: report.macro_f1,
                    scov: report.scov,
                    tcov: report.tcov,
                    bleu: bleu_score,
                    mean_nnz,
                    sentences: test_insts.len(),
                    failures: failures.len(),
                    weights,
                },
                setting: tuned.setting,
                eval: report,
                failures,
            });
        }
    }
    let report = RunReport {
        config_hash: hash,
        config: cfg.clone(),
        split_warnings: prepared.warnings.clone(),
        runs,
    };
    write_file(&out.join(REPORT_CSV), report.to_csv()?)?;
    write_json(&out.join(REPORT_JSON), &report)?;
    Ok(report)
}

pub const PHRASE_TABLE_DIR: &str = "phrase-tables";

/// Writes one Moses phrase table per test sentence plus a manifest, using
/// the export solver and the first `m` value.
pub fn cmd_export_pt(cfg: &ExperimentConfig) -> Result<PhraseTableManifest> {
    cfg.validate()?;
    let prepared = load_prepared(cfg)?;
    with_pool(cfg.workers, || export_prepared(cfg, &prepared))?
}

fn export_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<PhraseTableManifest> {
    let dir = cfg.out_dir.join(PHRASE_TABLE_DIR);
    create_dir(&dir)?;
    let train = &prepared.split.train;
    let test = limited(&prepared.split.test, cfg.test_limit);
    let table = build_cooccurrence(train, cfg.dice_order)?;
    let setting = match cfg.export_solver {
        SolverName::Ridge => SolverSetting::Ridge { lambda: cfg.export_lambda },
        SolverName::Fsr => SolverSetting::Fsr {
            step_eps: cfg.fsr_step,
            max_iters: cfg.export_fsr_iters,
        },
    };
    let insts = build_instances(&test, train, &table, cfg, cfg.m_values[0]);
    let written: Vec<Result<Option<PathBuf>>> = insts
        .par_iter()
        .map(|inst| {
            let pred = predict_instance(inst, &setting).map_err(Error::InvalidArgument)?;
            let mut entries = derive_entries(&pred.w, &inst.source);
            if cfg.table_limit > 0 {
                entries = truncate_per_source(entries, cfg.table_limit);
            }
            if entries.is_empty() {
                return Ok(None);
            }
            let path = dir.join(format!("{}.txt", inst.id));
            write_moses(&entries, &path)?;
            Ok(Some(path))
        })
        .collect();
    let mut manifest = PhraseTableManifest {
        limit: (cfg.table_limit > 0).then_some(cfg.table_limit),
        ..PhraseTableManifest::default()
    };
    for (inst, w) in insts.iter().zip(written) {
        match w? {
            Some(p) => {
                manifest.tables.insert(inst.id, p.display().to_string());
            }
            None => manifest.empty.push(inst.id),
        }
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(Sentence::parse).collect())
}

/// Corpus BLEU of a hypothesis file against a reference file, line by line.
pub fn eval_files(hypotheses: &Path, references: &Path, max_n: usize) -> Result<f64> {
    bleu(&read_sentences(hypotheses)?, &read_sentences(references)?, max_n)
}
