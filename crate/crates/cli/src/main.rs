//! Command-line surface for the mortality-forecasting pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mortsig::config::{self, Command as RunCommand};
use mortsig::io::read_with_fingerprint;

#[derive(Parser)]
#[command(
    name = "mortsig",
    version,
    about = "Mortality-curve fitting, forecasting, and backtesting with signature features"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Fit the decomposition and write mu/basis/scores plus diagnostics.
    Fit(CommonArgs),
    /// Fit, then forecast future curves.
    Forecast(CommonArgs),
    /// Expanding-window evaluation across models.
    Backtest(CommonArgs),
    /// Dump the per-age signature feature matrix.
    Features(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Input data files: life-table text (Year Age Female Male Total) or
    /// surface CSV (.csv). Repeatable.
    #[arg(long, num_args = 1.., value_name = "FILE")]
    data: Vec<PathBuf>,

    /// Exposure files matching --data (life-table inputs only).
    #[arg(long, num_args = 1.., value_name = "FILE")]
    exposures: Vec<PathBuf>,

    /// key=value config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Model: hurs, huts, hu, whu (backtest accepts a comma list, plus naive).
    #[arg(long)]
    model: Option<String>,

    /// Randomized-signature dimension (hurs only).
    #[arg(long)]
    k: Option<usize>,

    /// Truncation order (huts only).
    #[arg(long)]
    order: Option<usize>,

    /// Number of principal components.
    #[arg(long)]
    components: Option<usize>,

    /// Activation: linear[:slope], tanh, identity, constant:value (hurs only).
    #[arg(long)]
    activation: Option<String>,

    /// Geometric year-weight decay (whu only).
    #[arg(long)]
    kappa: Option<f64>,

    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Sex column: female, male, total.
    #[arg(long)]
    sex: Option<String>,

    /// Terminal open age group (e.g. 100 → ages 0..99 plus "100+").
    #[arg(long = "max-age")]
    max_age: Option<u32>,

    /// First data year to keep.
    #[arg(long = "start-year")]
    start_year: Option<i32>,

    /// Last data year to keep.
    #[arg(long = "end-year")]
    end_year: Option<i32>,

    /// Horizons, e.g. "1,5,10" or "1-10".
    #[arg(long)]
    horizons: Option<String>,

    /// Backtest window FIRST:LAST (test years).
    #[arg(long)]
    window: Option<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Spline basis size (default: min(25, ages/2)).
    #[arg(long = "basis-size")]
    basis_size: Option<usize>,

    /// Difference-penalty order, 1..=3.
    #[arg(long = "penalty-order")]
    penalty_order: Option<usize>,

    /// Smoothing parameter: "auto" (GCV) or a positive number.
    #[arg(long)]
    lambda: Option<String>,

    /// Observation weights: uniform or exposure.
    #[arg(long)]
    weights: Option<String>,

    /// Enforce non-decreasing fitted curves from this age upward.
    #[arg(long = "monotone-from")]
    monotone_from: Option<f64>,
}

impl CommonArgs {
    /// Flags become the same key=value pairs a config file uses; empty/unset
    /// flags contribute nothing so config-file entries survive.
    fn overrides(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        if !self.data.is_empty() {
            kv.push((
                "data".into(),
                self.data
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ));
        }
        if !self.exposures.is_empty() {
            kv.push((
                "exposures".into(),
                self.exposures
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ));
        }
        let mut push_opt = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((key.into(), v));
            }
        };
        push_opt("model", self.model.clone());
        push_opt("k", self.k.map(|v| v.to_string()));
        push_opt("order", self.order.map(|v| v.to_string()));
        push_opt("components", self.components.map(|v| v.to_string()));
        push_opt("activation", self.activation.clone());
        push_opt("kappa", self.kappa.map(|v| v.to_string()));
        push_opt("seed", self.seed.map(|v| v.to_string()));
        push_opt("sex", self.sex.clone());
        push_opt("max-age", self.max_age.map(|v| v.to_string()));
        push_opt("start-year", self.start_year.map(|v| v.to_string()));
        push_opt("end-year", self.end_year.map(|v| v.to_string()));
        push_opt("horizons", self.horizons.clone());
        push_opt("window", self.window.clone());
        push_opt("out", self.out.as_ref().map(|p| p.display().to_string()));
        push_opt("jobs", self.jobs.map(|v| v.to_string()));
        push_opt("basis-size", self.basis_size.map(|v| v.to_string()));
        push_opt("penalty-order", self.penalty_order.map(|v| v.to_string()));
        push_opt("lambda", self.lambda.clone());
        push_opt("weights", self.weights.clone());
        push_opt("monotone-from", self.monotone_from.map(|v| v.to_string()));
        kv
    }
}

fn run() -> mortsig::Result<()> {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Commands::Fit(a) => (RunCommand::Fit, a),
        Commands::Forecast(a) => (RunCommand::Forecast, a),
        Commands::Backtest(a) => (RunCommand::Backtest, a),
        Commands::Features(a) => (RunCommand::Features, a),
    };
    let file_content = match &args.config {
        Some(path) => Some((read_with_fingerprint(path)?, path.display().to_string())),
        None => None,
    };
    let file_ref = file_content
        .as_ref()
        .map(|((text, _), source)| (text.as_str(), source.as_str()));
    let cfg = config::resolve(command, file_ref, &args.overrides())?;
    mortsig::commands::run(&cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("error[{}]: {e}", class.label());
            ExitCode::from(class.exit_code() as u8)
        }
    }
}
