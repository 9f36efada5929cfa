use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use tabuq_core::conformal::{HssWeights, ScoreKind};
use tabuq_core::pipeline::io::read_json;
use tabuq_core::pipeline::{
    run_calibrate, run_evaluate, run_extract, run_tune, Manifest, ModelArtifact, RunConfig, TUNE_ORDER,
};
use tabuq_core::synth::{generate, write_corpus, SynthConfig};
use tabuq_core::{Error, Exec, Result};

#[derive(Debug, Parser)]
#[command(
    name = "tabuq",
    version,
    about = "Uncertainty-aware table extraction with human review"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build cells from detections and OCR; writes one cells artifact per table.
    Extract(ExtractArgs),
    /// Fit the conformal threshold on the calibration split; writes model.json.
    Calibrate(BatchArgs),
    /// Evaluate held-out cells; writes report.json and review_state.json.
    Evaluate(EvaluateArgs),
    /// Sweep the flag threshold for each score function and keep the best.
    Tune(BatchArgs),
    /// Serve the review API over an evaluate output directory.
    Serve(ServeArgs),
    /// Write the seeded synthetic corpus.
    Synth(SynthArgs),
}

/// `--tau` value: a number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauArg {
    Auto,
    Fixed(f64),
}

fn parse_tau(s: &str) -> std::result::Result<TauArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(TauArg::Auto);
    }
    s.parse::<f64>()
        .map(TauArg::Fixed)
        .map_err(|e| format!("expected a number or `auto`: {e}"))
}

/// `--hss-weights` value: `row,col,text` or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightsArg {
    Auto,
    Fixed(HssWeights),
}

fn parse_weights(s: &str) -> std::result::Result<WeightsArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(WeightsArg::Auto);
    }
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("expected `row,col,text` or `auto`: {e}"))?;
    match parts.as_slice() {
        [r, c, t] => HssWeights::new(*r, *c, *t)
            .map(WeightsArg::Fixed)
            .map_err(|e| e.to_string()),
        _ => Err("expected three comma-separated weights".into()),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    #[arg(long, value_parser = ["aps", "lac", "hss", "ocr", "tsr"])]
    pub score_fn: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Flag threshold, or `auto` to tune it on the calibration split.
    #[arg(long, value_parser = parse_tau)]
    pub tau: Option<TauArg>,
    #[arg(long)]
    pub ioa_threshold: Option<f64>,
    #[arg(long)]
    pub calib_fraction: Option<f64>,
    /// 1.0 requires exact text match; lower values accept Levenshtein accuracy at or above it.
    #[arg(long)]
    pub similarity_threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `row,col,text` or `auto` to grid-search them.
    #[arg(long, value_parser = parse_weights)]
    pub hss_weights: Option<WeightsArg>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Fit one threshold per domain instead of a pooled one.
    #[arg(long)]
    pub per_domain_calibration: bool,
    /// Process tables on one thread.
    #[arg(long)]
    pub sequential: bool,
}

impl ConfigArgs {
    /// Overrides `base` with the flags that were given.
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(s) = &self.score_fn {
            cfg.score_fn = s.parse::<ScoreKind>()?;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        match self.tau {
            Some(TauArg::Auto) => cfg.tau = None,
            Some(TauArg::Fixed(t)) => cfg.tau = Some(t),
            None => {}
        }
        if let Some(v) = self.ioa_threshold {
            cfg.ioa_threshold = v;
        }
        if let Some(v) = self.calib_fraction {
            cfg.calib_fraction = v;
        }
        if let Some(v) = self.similarity_threshold {
            cfg.similarity_threshold = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        match self.hss_weights {
            Some(WeightsArg::Auto) => cfg.hss_weights = None,
            Some(WeightsArg::Fixed(w)) => cfg.hss_weights = Some(w),
            None => {}
        }
        if let Some(v) = self.grid_step {
            cfg.grid_step = v;
        }
        if self.per_domain_calibration {
            cfg.per_domain_calibration = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub batch: BatchArgs,
    /// Calibration model; without it cells carry scores but no flags.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub batch: BatchArgs,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Output directory of `evaluate`.
    #[arg(long, default_value = "out")]
    pub state_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "corpus")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = tabuq_core::synth::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub tables_per_domain: usize,
}

fn load_model(path: &Path) -> Result<ModelArtifact> {
    read_json(path)
}

fn load_jobs(path: &Path) -> Result<Manifest> {
    Manifest::load(path)
}

fn print_json<T: serde::Serialize>(v: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("serializable");
    // A closed pipe (e.g. `| head`) is not an error for the run itself.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Runs a batch command. `serve` is handled by the caller, which owns the runtime.
pub fn run_batch(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => {
            let m = load_jobs(&a.batch.manifest)?;
            let model = a.model.as_deref().map(load_model).transpose()?;
            let base = model.as_ref().map(|m| m.config.clone()).unwrap_or_default();
            let cfg = a.batch.config.apply(base)?;
            let tables = run_extract(a.batch.config.exec(), &m.tables, &cfg, model.as_ref(), &a.batch.out_dir)?;
            let flagged: usize = tables
                .iter()
                .map(|t| t.cells.iter().filter(|c| c.flagged).count())
                .sum();
            let cells: usize = tables.iter().map(|t| t.cells.len()).sum();
            eprintln!("extracted {} tables, {cells} cells, {flagged} flagged", tables.len());
        }
        Command::Calibrate(a) => {
            let m = load_jobs(&a.manifest)?;
            let cfg = a.config.apply(RunConfig::default())?;
            let model = run_calibrate(a.config.exec(), &m.tables, &cfg, Some(&a.out_dir))?;
            eprintln!(
                "q_hat = {:.6}, tau = {:.2} over {} calibration cells",
                model.model.q_hat, model.model.flag_threshold_tau, model.model.calibration_size
            );
        }
        Command::Evaluate(a) => {
            let m = load_jobs(&a.batch.manifest)?;
            let model = load_model(&a.model)?;
            let cfg = a.batch.config.apply(model.config.clone())?;
            let eval = run_evaluate(a.batch.config.exec(), &m.tables, &model, &cfg, Some(&a.batch.out_dir))?;
            print_json(&eval.artifact.all);
        }
        Command::Tune(a) => {
            let m = load_jobs(&a.manifest)?;
            let cfg = a.config.apply(RunConfig::default())?;
            let kinds: Vec<ScoreKind> = match &a.config.score_fn {
                Some(_) => vec![cfg.score_fn],
                None => TUNE_ORDER.to_vec(),
            };
            let report = run_tune(a.config.exec(), &m.tables, &cfg, &kinds, Some(&a.out_dir))?;
            for c in &report.candidates {
                eprintln!(
                    "{:>4}: tau = {:.2}, F1 = {:.4}",
                    c.score_fn.as_str(),
                    c.best_tau,
                    c.best_f1
                );
            }
            eprintln!("selected {}", report.selected.as_str());
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                seed: a.seed,
                tables_per_domain: a.tables_per_domain,
                ..SynthConfig::default()
            };
            let tables: Vec<_> = generate(&cfg).into_iter().map(|(t, _)| t).collect();
            let path = write_corpus(&a.out_dir, &tables)?;
            eprintln!("wrote {} tables to {}", tables.len(), path.display());
        }
        Command::Serve(_) => return Err(Error::degenerate("serve is not a batch command")),
    }
    Ok(())
}
