//! `hpm`: fit, score, diagnose, and evaluate post-hoc OOD detectors on
//! frozen feature banks.
//!
//! Verbs: `synth`, `fit`, `score`, `diagnose`, `eval`, and `report`
//! (fit + score + diagnose + eval in one run). Exit codes: 0 success,
//! 1 validation error, 2 i/o error.

mod commands;
mod config;
mod plots;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;


#[derive(Parser)]
#[command(
    name = "hpm",
    version,
    about = "Post-hoc OOD detection on frozen feature banks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic long-tailed ID bank, a held-out eval bank, a
    /// matching linear head, and one OOD bank.
    Synth(SynthArgs),
    /// Fit the requested Mahalanobis-family detectors on the ID bank.
    Fit(RunArgs),
    /// Score the ID eval bank and every OOD bank with each detector.
    Score(RunArgs),
    /// Emit geometry diagnostics (null scatter, radius profile, spectra).
    Diagnose(RunArgs),
    /// Compute AUROC / FPR95 per detector and OOD set, plus LES.
    Eval(RunArgs),
    /// fit + score + diagnose + eval.
    Report(RunArgs),
}

#[derive(Args, Clone, Debug)]
pub struct SynthArgs {
    /// Output directory for the generated banks.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of classes.
    #[arg(long, default_value_t = 20)]
    classes: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Sample count of the most frequent class.
    #[arg(long, default_value_t = 150)]
    n_max: usize,
    /// Head-to-tail imbalance ratio (>= 1).
    #[arg(long, default_value_t = 50.0)]
    imbalance_ratio: f64,
    /// Tail-norm inflation factor (>= 1).
    #[arg(long, default_value_t = 1.3)]
    radius_coupling: f64,
    /// Within-class direction spread.
    #[arg(long, default_value_t = 0.25)]
    spread: f64,
    /// Eigenvalue decay rate of within-class covariance (0 = isotropic).
    #[arg(long, default_value_t = 3.0)]
    anisotropy: f64,
    /// OOD kind: shifted-gaussian or uniform-sphere.
    #[arg(long, default_value = "shifted-gaussian")]
    ood_kind: String,
}

/// Flags shared by the pipeline verbs. Values override the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// JSON run configuration; flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (models, scores, diagnostics, reports).
    #[arg(long)]
    out: Option<PathBuf>,
    /// FBANK directory the detectors are fitted on.
    #[arg(long)]
    id_bank: Option<PathBuf>,
    /// Held-out ID bank scored for evaluation (defaults to --id-bank).
    #[arg(long)]
    id_eval: Option<PathBuf>,
    /// OOD bank as name=path; repeatable.
    #[arg(long = "ood-bank")]
    ood_bank: Vec<String>,
    /// Directory holding head_w.bin / head_b.bin (defaults to --id-bank).
    #[arg(long)]
    head: Option<PathBuf>,
    /// Model name used in reports.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated detector list from
    /// {energy, msp, md, rp-md, hc-md, hpm}.
    #[arg(long)]
    detectors: Option<String>,
    /// Relative ridge strength for covariance regularization.
    #[arg(long)]
    lambda_rel: Option<f64>,
    /// Energy temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Fraction of classes forming the head group.
    #[arg(long)]
    head_fraction: Option<f64>,
    /// TPR target of the FPR metric.
    #[arg(long)]
    tpr_target: Option<f64>,
    /// Training cost for the log efficiency score.
    #[arg(long)]
    cost: Option<f64>,
    /// Unit string echoed next to the cost.
    #[arg(long)]
    cost_unit: Option<String>,
    /// Closed-set accuracy passed through to reports.
    #[arg(long)]
    acc: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also emit SVG charts with the diagnostics.
    #[arg(long)]
    plots: bool,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(args) => commands::synth::run(&args),
        Cmd::Fit(args) => config::Config::resolve(&args).and_then(|c| commands::fit::run(&c)),
        Cmd::Score(args) => config::Config::resolve(&args).and_then(|c| commands::score::run(&c)),
        Cmd::Diagnose(args) => {
            config::Config::resolve(&args).and_then(|c| commands::diagnose::run(&c))
        }
        Cmd::Eval(args) => config::Config::resolve(&args).and_then(|c| commands::eval::run(&c)),
        Cmd::Report(args) => config::Config::resolve(&args).and_then(|c| {
            commands::fit::run(&c)?;
            commands::score::run(&c)?;
            commands::diagnose::run(&c)?;
            commands::eval::run(&c)
        }),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(e.exit_code());
    }
}
