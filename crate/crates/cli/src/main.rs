//! `regmt`: batch driver for transductive regression translation experiments.
//!
//! Exit codes: 0 success, 1 failure (including per-sentence failures in
//! `run`), 2 configuration error. Logs go to stderr; data only to files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regmt::config::ExperimentConfig;
use regmt::pipeline;
use regmt::Error;

#[derive(Parser)]
#[command(name = "regmt", version, about = "Transductive regression-based machine translation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or synthesize a corpus and write the evaluation split.
    Prepare(ConfigArgs),
    /// Select, fit, tune, evaluate and decode the prepared test set.
    Run(ConfigArgs),
    /// Write one Moses phrase table per test sentence.
    ExportPt(ConfigArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Eval {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Also write `{"bleu": ...}` to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set beam=16` or `--set 'm_values=[50,100]'`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> regmt::Result<ExperimentConfig> {
        let mut overrides = self.set.clone();
        let quoted = |p: &PathBuf| format!("\"{}\"", p.display().to_string().replace('\\', "\\\\").replace('"', "\\\""));
        if let Some(p) = &self.out_dir {
            overrides.push(format!("out_dir={}", quoted(p)));
        }
        if let Some(p) = &self.source {
            overrides.push(format!("source_path={}", quoted(p)));
        }
        if let Some(p) = &self.target {
            overrides.push(format!("target_path={}", quoted(p)));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(w) = self.workers {
            overrides.push(format!("workers={w}"));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn exit_for(err: &Error) -> ExitCode {
    log::error!("{err}");
    match err {
        Error::Config { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prepare(a) => a.resolve().and_then(|c| pipeline::cmd_prepare(&c)).map(|_| 0),
        Command::Run(a) => a.resolve().and_then(|c| pipeline::cmd_run(&c)).map(|r| {
            let failed = r.failures();
            if failed > 0 {
                log::error!("{failed} sentence(s) failed; see report.json");
            }
            u8::from(failed > 0)
        }),
        Command::ExportPt(a) => a.resolve().and_then(|c| pipeline::cmd_export_pt(&c)).map(|m| {
            log::info!("wrote {} phrase tables ({} empty)", m.tables.len(), m.empty.len());
            0
        }),
        Command::Eval { hyp, reference, order, out } => pipeline::eval_files(hyp, reference, *order).and_then(|b| {
            println!("BLEU = {b:.4}");
            if let Some(path) = out {
                let json = serde_json::json!({ "bleu": b, "order": order });
                std::fs::write(path, format!("{json}\n")).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => exit_for(&e),
    }
}
