//! `cic`: command-line workflows for cell identity code models.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use cic_core::models::ArchitectureKind;
use cic_core::robustness::SweepKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        let flat: Vec<&str> = msg.split_whitespace().collect();
        format!("error: {kind}: {}", flat.join(" "))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cic",
    version,
    about = "Train and evaluate multi-task autoencoders that compress mRNA profiles into a cell identity code (CIC)"
)]
pub struct Cli {
    /// Root seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for folds, sweep points, queries and trials. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Run configuration (TOML). Tables: [network], [split], [hyperopt], [sweep], [baseline], [pca].
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory for outputs and the manifest.
    #[arg(long, global = true, default_value = "cic-run")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

/// Network overrides shared by training commands.
#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Architecture: cae, dropout_cae, vae or dropout_vae.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchitectureKind>,
    /// CIC (code) size.
    #[arg(long)]
    pub cic: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Network spec JSON, e.g. `best_spec.json` from `hyperopt`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

fn parse_arch(s: &str) -> Result<ArchitectureKind, String> {
    s.parse().map_err(|e: cic_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    /// The hold-out test portion derived from --seed and [split].
    Test,
    /// Every sample.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepChoice {
    Dropout,
    Noise,
}

impl From<SweepChoice> for SweepKind {
    fn from(c: SweepChoice) -> Self {
        match c {
            SweepChoice::Dropout => SweepKind::Dropout,
            SweepChoice::Noise => SweepKind::Noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureChoice {
    /// Max-norm normalized mRNA profiles.
    Raw,
    /// The first [pca] components of the mRNA profiles.
    Pca,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (mrna.tsv, mirna.tsv, labels.tsv).
    Synth {
        #[arg(long, default_value_t = 5)]
        tissues: usize,
        #[arg(long, default_value_t = 8)]
        diseases: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        mrna: usize,
        #[arg(long, default_value_t = 40)]
        mirna: usize,
        #[arg(long, default_value_t = 0.08)]
        noise_sd: f64,
    },
    /// Train on the hold-out training portion; writes model.json, epochs.csv, metrics.csv, confusion_*.csv, cics.csv.
    Train {
        /// Dataset directory with mrna.tsv, mirna.tsv and labels.tsv.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        net: NetArgs,
    },
    /// K-fold cross-validation; writes pooled metrics.csv, confusion_*.csv, cics.csv, summary.json.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        net: NetArgs,
        /// Fold count.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// TPE hyperparameter search on an 80/20 split; writes trials.jsonl, best.json, best_spec.json.
    Hyperopt {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        net: NetArgs,
        /// Total trials, counting resumed ones.
        #[arg(long)]
        trials: Option<usize>,
        /// Training epochs per trial.
        #[arg(long)]
        objective_epochs: Option<usize>,
        /// Search-space file (TOML or JSON).
        #[arg(long)]
        space: Option<PathBuf>,
        /// Continue from the run directory's trials.jsonl.
        #[arg(long)]
        resume: bool,
        /// Cross-validate the winning network afterwards.
        #[arg(long)]
        cv: bool,
    },
    /// Evaluate a checkpoint; writes evaluation.csv, metrics.csv, confusion_*.csv.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
        split: SplitChoice,
    },
    /// Encode every sample; writes cics.csv with predictions and codes.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Perturbation sweep of a checkpoint; writes sweep.csv.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepChoice,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
        split: SplitChoice,
        /// Comma-separated levels; 0..0.50 (dropout) or 0..0.25 (noise) in 0.01 steps by default.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Seeded replicates per level.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// PCA of raw profiles (and of codes with --model); writes pca_raw.csv, pca_cic.csv, separability.csv.
    Pca {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        components: Option<usize>,
    },
    /// Tuned KNN baseline on the hold-out split; writes comparison.csv.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = FeatureChoice::Raw)]
        features: FeatureChoice,
        /// Add the checkpoint's hold-out accuracies as a comparison row.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Summarize a run directory into report.md.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let msg = first
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(msg.to_string()).line());
            return ExitCode::from(2);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(&cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
