//! `monogp`: constrained Gaussian-process regression for damage curves.
//!
//! Subcommands cover the full workflow: `simulate` writes synthetic
//! datasets, `fit` samples the posterior into an on-disk archive, `predict`
//! evaluates the predictive distribution at query points, `cv` runs
//! cross-validation (optionally comparing both model variants), and
//! `diagnose` turns fit and cross-validation results into convergence and
//! calibration tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure, 5 convergence failure.

mod archive;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, SchemeChoice, VariantChoice};

/// Errors carrying their process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or request (exit 2).
    Config(String),
    /// Unreadable, malformed, or inconsistent input data (exit 3).
    Data(String),
    /// Numerical failure inside the solver (exit 4).
    Numerical(String),
    /// The sampler ran but did not converge (exit 5).
    Convergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Convergence(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numerical(m)
            | CliError::Convergence(m) => m,
        }
    }
}

impl From<monogp::Error> for CliError {
    fn from(e: monogp::Error) -> Self {
        use monogp::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_)
            | E::NonPositive { .. }
            | E::EmptyInput(_)
            | E::IndexOutOfRange { .. }
            | E::DimensionMismatch { .. }
            | E::InsufficientDraws { .. }
            | E::EmptyFold(_)
            | E::SizeCap { .. } => CliError::Config(msg),
            E::SchemaMismatch { .. }
            | E::NonNumericCell { .. }
            | E::DuplicateKey { .. }
            | E::MissingTimePoint { .. }
            | E::RaggedTimeGrid { .. }
            | E::ZeroVarianceColumn { .. }
            | E::InconsistentFeatures { .. }
            | E::Csv(_)
            | E::Io(_) => CliError::Data(msg),
            E::NotPositiveDefinite { .. } | E::BadInitialization => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("I/O error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("CSV error: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "monogp",
    version,
    about = "Constrained spatio-temporal Gaussian-process regression",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior and write a model archive.
    Fit(FitArgs),
    /// Evaluate the predictive distribution at query points.
    Predict(PredictArgs),
    /// Cross-validate one or both model variants.
    Cv(CvArgs),
    /// Convergence and calibration diagnostics for a fitted model.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
}

#[derive(clap::Args)]
struct FitArgs {
    /// TOML run configuration; must name the training dataset.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the model archive.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the sampler seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[model] variant` (deriv or noderiv).
    #[arg(long, value_enum)]
    variant: Option<VariantChoice>,
    /// Overrides `[inference] chains`.
    #[arg(long)]
    chains: Option<usize>,
    /// Overrides `[inference] draws`.
    #[arg(long)]
    draws: Option<usize>,
    /// Overrides `[inference] warmup`.
    #[arg(long)]
    warmup: Option<usize>,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Model archive directory written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Query CSV with header `sx,sy,h,s,i,t` and an optional trailing
    /// `deriv` column (1 requests the latent time derivative).
    #[arg(long)]
    query: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CvArgs {
    /// TOML run configuration; must name the training dataset.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `[cv] scheme`.
    #[arg(long, value_enum)]
    scheme: Option<SchemeChoice>,
    /// Overrides `[model] variant`; `both` fits and compares the two
    /// variants on identical folds and seeds.
    #[arg(long, value_enum)]
    variant: Option<VariantChoice>,
    /// Overrides the sampler seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[inference] chains`.
    #[arg(long)]
    chains: Option<usize>,
    /// Overrides `[inference] draws`.
    #[arg(long)]
    draws: Option<usize>,
    /// Overrides `[inference] warmup`.
    #[arg(long)]
    warmup: Option<usize>,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// Model archive directory written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Directory of a leave-one-observation `cv` run over the same data;
    /// defaults to `<model>/cv1`.
    #[arg(long)]
    cv: Option<PathBuf>,
    /// Output directory for diagnostic tables.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// TOML run configuration; `[simulate]` controls the generator.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the dataset.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `[simulate] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => commands::fit::run(
            &a.config,
            &a.out,
            Overrides {
                seed: a.seed,
                chains: a.chains,
                warmup: a.warmup,
                draws: a.draws,
            },
            a.variant,
        ),
        Command::Predict(a) => commands::predict::run(&a.model, &a.query, &a.out),
        Command::Cv(a) => commands::cv::run(
            &a.config,
            &a.out,
            Overrides {
                seed: a.seed,
                chains: a.chains,
                warmup: a.warmup,
                draws: a.draws,
            },
            a.scheme,
            a.variant,
        ),
        Command::Diagnose(a) => commands::diagnose::run(&a.model, a.cv.as_deref(), &a.out),
        Command::Simulate(a) => commands::simulate::run(a.config.as_deref(), &a.out, a.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
