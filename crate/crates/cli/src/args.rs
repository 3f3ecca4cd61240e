//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "RRC_GARCH_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rrc", version, about = "Random-rounded count GARCH models")]
pub struct Cli {
    /// Master seed for simulation, random optimizer starts and Monte Carlo draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (1 runs everything sequentially).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,

    /// Suppress the summary printed to stdout.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path and write one count per line plus a metadata file.
    Simulate(SimulateArgs),
    /// Fit a model of a given order to a count series.
    Fit(FitArgs),
    /// Choose the order by AIC and BIC over a candidate grid.
    Select(SelectArgs),
    /// Fit on the head of a series and evaluate one-step forecasts on its tail.
    Forecast(ForecastArgs),
    /// Pearson residual diagnostics of a fitted model.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo estimation and selection study over the scenario catalog.
    McStudy(McStudyArgs),
    /// Sample and theoretical autocorrelations.
    Acf(AcfArgs),
}

/// Where a model specification comes from.
#[derive(Debug, Args)]
pub struct SpecSource {
    /// Model specification file (TOML or JSON).
    #[arg(long, conflicts_with = "scenario")]
    pub spec: Option<PathBuf>,

    /// Built-in scenario name (M1a..M6b).
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SpecSource,

    /// Number of observations kept.
    #[arg(long, short)]
    pub n: usize,

    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,

    /// Output CSV (default `<out-dir>/simulated.csv`); metadata goes next to it as `.json`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Model and estimator options shared by the fitting commands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `laplace`, `softplus` or `relu`, optionally with a scale: `softplus:0.7`.
    #[arg(long, default_value = "laplace")]
    pub link: String,

    /// `base`, `extended-tau`, `extended-r`, `power` or `mixture:<r>`.
    #[arg(long, default_value = "base")]
    pub family: String,

    /// `ols` or `owls` (overrides the config file).
    #[arg(long)]
    pub weights: Option<String>,

    /// Estimator settings file (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Count series, one integer per line.
    #[arg(long, short)]
    pub data: PathBuf,

    /// Model order `p1,p2`.
    #[arg(long, short)]
    pub order: String,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, short)]
    pub data: PathBuf,

    /// Largest orders `p1m,p2m` of the grid.
    #[arg(long, default_value = "2,2")]
    pub max_order: String,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long, short)]
    pub data: PathBuf,

    #[arg(long, short)]
    pub order: String,

    /// Number of trailing observations held out.
    #[arg(long, short = 'k')]
    pub holdout: usize,

    /// Also simulate continuations of the full series for this many steps.
    #[arg(long)]
    pub horizon: Option<usize>,

    /// Number of simulated continuations.
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, short)]
    pub data: PathBuf,

    #[arg(long, short)]
    pub order: String,

    /// Largest lag of the residual ACF.
    #[arg(long, default_value_t = 20)]
    pub lags: usize,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct McStudyArgs {
    /// Study settings file (TOML or JSON); defaults apply otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Comma-separated scenario names.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Vec<String>,

    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,

    #[arg(long)]
    pub replications: Option<usize>,

    /// Skip the OLS/OWLS estimation tables.
    #[arg(long)]
    pub no_estimate: bool,

    /// Skip order selection.
    #[arg(long)]
    pub no_select: bool,
}

#[derive(Debug, Args)]
pub struct AcfArgs {
    /// Count series for the sample ACF and PACF.
    #[arg(long, short)]
    pub data: Option<PathBuf>,

    #[command(flatten)]
    pub source: SpecSource,

    #[arg(long, default_value_t = 20)]
    pub lags: usize,

    /// Add the closed-form ACF of the given specification.
    #[arg(long)]
    pub theoretical: bool,
}
