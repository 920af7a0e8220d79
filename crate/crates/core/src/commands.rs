//! Implementations of the command-line operations: fit, forecast, backtest,
//! features. Every output file starts with a comment header carrying the
//! version, the fully resolved configuration, seeds, and input fingerprints,
//! so a run can be reproduced from its artifacts alone.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::backtest::{compare_models, run_backtest, BacktestPlan, BacktestReport};
use crate::config::{Command, RunConfig};
use crate::decompose::{center, feature_matrix, mean_function, Featurizer};
use crate::error::{Error, Result};
use crate::forecast::forecast_surface;
use crate::io::{
    build_surface, hmd_country_label, parse_csv_matrix, parse_hmd_table, read_with_fingerprint,
    redistribute_exposures, BuildOptions,
};
use crate::model::{fit_pipeline, Forecaster, ModelKind, NaiveForecaster, PipelineForecaster};
use crate::surface::{MortalitySurface, SourceFingerprint};
use crate::VERSION;

/// One loaded input: surface plus optional aligned exposure matrix.
pub struct LoadedDataset {
    pub label: String,
    pub surface: MortalitySurface,
    pub exposures: Option<DMatrix<f64>>,
    pub sources: Vec<SourceFingerprint>,
}

/// Entry point used by the binary: dispatch under the requested thread pool.
pub fn run(cfg: &RunConfig) -> Result<()> {
    match cfg.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Usage(format!("cannot build a {jobs}-thread pool: {e}")))?;
            pool.install(|| dispatch(cfg))
        }
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<()> {
    println!("config: {}", cfg.resolved_line());
    match cfg.command {
        Command::Fit => cmd_fit(cfg),
        Command::Forecast => cmd_forecast(cfg),
        Command::Backtest => cmd_backtest(cfg),
        Command::Features => cmd_features(cfg),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false)
}

fn dataset_label(path: &Path, surface: &MortalitySurface) -> String {
    surface
        .provenance
        .country
        .clone()
        .unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "data".to_string())
        })
}

/// Load one data file (life-table text or surface CSV) and, when given, its
/// exposure companion.
pub fn load_dataset(cfg: &RunConfig, data: &Path, expo: Option<&PathBuf>) -> Result<LoadedDataset> {
    let (text, fp) = read_with_fingerprint(data)?;
    let mut sources = vec![fp];
    if is_csv(data) {
        if expo.is_some() {
            return Err(Error::Usage(
                "exposure files apply to life-table inputs, not CSV matrices".into(),
            ));
        }
        let mut surface = parse_csv_matrix(&text, &data.display().to_string())?;
        surface.provenance.sources = sources.clone();
        let label = dataset_label(data, &surface);
        return Ok(LoadedDataset {
            label,
            surface,
            exposures: None,
            sources,
        });
    }

    let records = parse_hmd_table(&text, &data.display().to_string())?;
    let expo_records = match expo {
        Some(path) => {
            let (etext, efp) = read_with_fingerprint(path)?;
            sources.push(efp);
            Some(parse_hmd_table(&etext, &path.display().to_string())?)
        }
        None => None,
    };
    let opts = BuildOptions {
        max_age: cfg.max_age,
        start_year: cfg.start_year,
        end_year: cfg.end_year,
        column: cfg.sex,
        country: hmd_country_label(&text),
    };
    let mut surface = build_surface(&records, expo_records.as_deref(), &opts)?;
    surface.provenance.sources = sources.clone();
    let exposures = expo_records
        .as_deref()
        .map(|e| redistribute_exposures(e, &surface, cfg.sex))
        .transpose()?;
    let label = dataset_label(data, &surface);
    Ok(LoadedDataset {
        label,
        surface,
        exposures,
        sources,
    })
}

fn load_all(cfg: &RunConfig) -> Result<Vec<LoadedDataset>> {
    let mut out = Vec::new();
    for (i, data) in cfg.data.iter().enumerate() {
        out.push(load_dataset(cfg, data, cfg.exposures.get(i))?);
    }
    Ok(out)
}

fn load_single(cfg: &RunConfig) -> Result<LoadedDataset> {
    if cfg.data.len() != 1 {
        return Err(Error::Usage(format!(
            "{} expects exactly one data file, got {}",
            cfg.command.label(),
            cfg.data.len()
        )));
    }
    load_all(cfg).map(|mut v| v.remove(0))
}

/// Comment header lines shared by every output file.
fn header_lines(cfg: &RunConfig, datasets: &[&LoadedDataset]) -> Vec<String> {
    let mut lines = vec![
        format!("mortsig {VERSION}"),
        format!("config: {}", cfg.resolved_line()),
        format!("seed: {}", cfg.seed),
    ];
    for ds in datasets {
        for src in &ds.sources {
            lines.push(format!("input: {} sha256={}", src.path, src.sha256_16));
        }
        lines.push(format!(
            "dataset: {} years={}..{} ages={} fingerprint={} repairs={}",
            ds.label,
            ds.surface.first_year(),
            ds.surface.last_year(),
            ds.surface.n_ages(),
            ds.surface.fingerprint(),
            ds.surface.provenance.repairs
        ));
    }
    lines
}

fn commented(lines: &[String]) -> String {
    lines
        .iter()
        .map(|l| format!("# {l}\n"))
        .collect::<Vec<_>>()
        .join("")
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

/// Long-format (year, age, value) dump of a surface, year-major.
fn surface_long_csv(surface: &MortalitySurface, header: &str, value_name: &str) -> String {
    let mut out = String::from(header);
    out.push_str(&format!("year,age,{value_name}\n"));
    let labels = surface.ages().labels();
    for (t, year) in surface.years().iter().enumerate() {
        for (i, label) in labels.iter().enumerate() {
            out.push_str(&format!("{year},{label},{}\n", surface.values()[(t, i)]));
        }
    }
    out
}

/// Per-age time-series dump (age-major), mirroring the per-age panel of the
/// usual three-panel mortality plot.
fn age_series_csv(surface: &MortalitySurface, header: &str) -> String {
    let mut out = String::from(header);
    out.push_str("age,year,log_rate\n");
    let labels = surface.ages().labels();
    for (i, label) in labels.iter().enumerate() {
        for (t, year) in surface.years().iter().enumerate() {
            out.push_str(&format!("{label},{year},{}\n", surface.values()[(t, i)]));
        }
    }
    out
}

fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let ds = load_single(cfg)?;
    let pipeline = cfg.pipeline_config()?;
    let fit = fit_pipeline(&ds.surface, ds.exposures.as_ref(), &pipeline, cfg.seed)?;
    let head = commented(&header_lines(cfg, &[&ds]));
    let dec = &fit.decomposition;
    let labels = ds.surface.ages().labels();

    let mut mu = head.clone();
    mu.push_str("age,mu\n");
    for (i, label) in labels.iter().enumerate() {
        mu.push_str(&format!("{label},{}\n", dec.mu[i]));
    }
    write_file(&cfg.out_dir, "mu.csv", &mu)?;

    let k = dec.n_components();
    let mut basis = head.clone();
    basis.push_str("age");
    for c in 1..=k {
        basis.push_str(&format!(",z{c}"));
    }
    basis.push('\n');
    for (i, label) in labels.iter().enumerate() {
        basis.push_str(label);
        for c in 0..k {
            basis.push_str(&format!(",{}", dec.basis[(i, c)]));
        }
        basis.push('\n');
    }
    write_file(&cfg.out_dir, "basis.csv", &basis)?;

    let mut scores = head.clone();
    scores.push_str("year");
    for c in 1..=k {
        scores.push_str(&format!(",beta{c}"));
    }
    scores.push('\n');
    for (t, year) in ds.surface.years().iter().enumerate() {
        scores.push_str(&year.to_string());
        for c in 0..k {
            scores.push_str(&format!(",{}", dec.scores[(t, c)]));
        }
        scores.push('\n');
    }
    write_file(&cfg.out_dir, "scores.csv", &scores)?;

    let mut diag = head.clone();
    diag.push_str(&format!("method: {}\n", dec.method));
    diag.push_str(&format!("components: {k}\n"));
    for (c, ve) in dec.variance_explained.iter().enumerate() {
        diag.push_str(&format!("variance_explained[{}]: {ve}\n", c + 1));
    }
    diag.push_str(&format!("repairs: {}\n", ds.surface.provenance.repairs));
    diag.push_str(&format!("smoothing: {}\n", fit.smoothing.config_summary));
    for (t, (lambda, edf)) in fit
        .smoothing
        .lambdas
        .iter()
        .zip(&fit.smoothing.edfs)
        .enumerate()
    {
        diag.push_str(&format!(
            "lambda[{}]: {lambda} edf={edf}\n",
            ds.surface.years()[t]
        ));
    }
    if let Some(fsum) = &fit.feature_summary {
        diag.push_str(&format!("features: {fsum}\n"));
    }
    for note in &fit.notes {
        diag.push_str(&format!("note: {note}\n"));
    }
    write_file(&cfg.out_dir, "diagnostics.txt", &diag)?;

    // Plot-ready panels: observed, smoothed, and per-age series.
    write_file(
        &cfg.out_dir,
        "observed_curves.csv",
        &surface_long_csv(&ds.surface, &head, "log_rate"),
    )?;
    write_file(
        &cfg.out_dir,
        "smoothed_curves.csv",
        &surface_long_csv(&fit.smoothed, &head, "log_rate"),
    )?;
    write_file(&cfg.out_dir, "age_series.csv", &age_series_csv(&ds.surface, &head))?;

    println!(
        "fit: {} components, variance explained {:.4}",
        k,
        dec.variance_explained.iter().sum::<f64>()
    );
    Ok(())
}

fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let ds = load_single(cfg)?;
    let pipeline = cfg.pipeline_config()?;
    let h = *cfg.horizons.iter().max().expect("validated non-empty");
    let fit = fit_pipeline(&ds.surface, ds.exposures.as_ref(), &pipeline, cfg.seed)?;
    let curves = forecast_surface(&fit.decomposition, h)?;

    let head = commented(&header_lines(cfg, &[&ds]));
    let labels = ds.surface.ages().labels();
    let mut out = head;
    out.push_str("year,age,predicted_log_rate\n");
    for j in 0..h {
        let year = ds.surface.last_year() + 1 + j as i32;
        for (i, label) in labels.iter().enumerate() {
            out.push_str(&format!("{year},{label},{}\n", curves[(j, i)]));
        }
    }
    write_file(&cfg.out_dir, "forecast.csv", &out)?;
    println!(
        "forecast: {h} years beyond {} written",
        ds.surface.last_year()
    );
    Ok(())
}

/// Build the forecaster set for a backtest run.
fn build_models(
    cfg: &RunConfig,
    ds: &LoadedDataset,
) -> Result<Vec<(String, Box<dyn Forecaster>)>> {
    let mut out: Vec<(String, Box<dyn Forecaster>)> = Vec::new();
    for label in cfg.model_list() {
        if label == "naive" {
            out.push((label, Box::new(NaiveForecaster)));
            continue;
        }
        let pipeline = cfg.pipeline_config_for(&label)?;
        let mut f = PipelineForecaster::new(pipeline);
        if let Some(expo) = &ds.exposures {
            f = f.with_exposures(ds.surface.first_year(), expo.clone());
        }
        out.push((label, Box::new(f)));
    }
    Ok(out)
}

fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    let datasets = load_all(cfg)?;
    let mut reports: Vec<BacktestReport> = Vec::new();
    for ds in &datasets {
        let (first_test, last_test) = cfg.window.unwrap_or_else(|| {
            // Default: the last two decades of the data.
            let last = ds.surface.last_year();
            (last - 19, last)
        });
        let plan = BacktestPlan {
            first_test_year: first_test,
            last_test_year: last_test,
            horizons: cfg.horizons.clone(),
            master_seed: cfg.seed,
        };
        let models = build_models(cfg, ds)?;
        let model_refs: Vec<(String, &dyn Forecaster)> = models
            .iter()
            .map(|(l, b)| (l.clone(), b.as_ref()))
            .collect();
        let mut report = run_backtest(&ds.surface, &plan, &model_refs)?;
        report.dataset = ds.label.clone();
        reports.push(report);
    }

    let refs: Vec<&LoadedDataset> = datasets.iter().collect();
    let head = commented(&header_lines(cfg, &refs));

    let mut long = head.clone();
    long.push_str(
        &reports
            .iter()
            .map(|r| r.long_csv())
            .collect::<Vec<_>>()
            .join(""),
    );
    // Drop repeated inner headers from concatenated reports.
    let long = dedup_csv_header(&long, "dataset,model,origin,horizon");
    write_file(&cfg.out_dir, "backtest_long.csv", &long)?;

    let mut summary = head.clone();
    summary.push_str(
        &reports
            .iter()
            .map(|r| r.summary_csv())
            .collect::<Vec<_>>()
            .join(""),
    );
    let summary = dedup_csv_header(&summary, "dataset,model,horizon");
    write_file(&cfg.out_dir, "backtest_summary.csv", &summary)?;

    let mut ranking = head.clone();
    ranking.push_str("dataset,horizon,rank,model,mse\n");
    for report in &reports {
        for (h, ranked) in compare_models(report) {
            for (rank, (model, value)) in ranked.iter().enumerate() {
                ranking.push_str(&format!(
                    "{},{h},{},{model},{value}\n",
                    report.dataset,
                    rank + 1
                ));
            }
        }
    }
    write_file(&cfg.out_dir, "ranking.csv", &ranking)?;

    let mut incomplete = 0usize;
    for report in &reports {
        incomplete += report.skipped.len();
        for skip in &report.skipped {
            eprintln!(
                "warning: {} origin {} skipped for {}: {}",
                report.dataset, skip.origin, skip.model, skip.reason
            );
        }
        for (model, horizon, value) in report.mse_summary() {
            println!("{} {model} h={horizon} mse={value:.6}", report.dataset);
        }
    }
    if incomplete > 0 {
        println!("note: {incomplete} (model, origin) pairs skipped; report is incomplete");
    }
    Ok(())
}

/// Keep the first occurrence of the column-header line, drop repeats.
fn dedup_csv_header(text: &str, header_prefix: &str) -> String {
    let mut seen = false;
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.starts_with(header_prefix) {
            if seen {
                continue;
            }
            seen = true;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn cmd_features(cfg: &RunConfig) -> Result<()> {
    let ds = load_single(cfg)?;
    let pipeline = cfg.pipeline_config()?;
    let featurizer = match pipeline.kind {
        ModelKind::Hurs { k, activation } => Featurizer::Randomized {
            k,
            seed: cfg.seed,
            activation,
        },
        ModelKind::Huts { order } => Featurizer::Truncated { order },
        _ => {
            return Err(Error::Usage(
                "feature dumps exist only for the signature models (hurs, huts)".into(),
            ))
        }
    };
    let fit_input = {
        use crate::smoothing::smooth_surface;
        let p = ds.surface.n_ages();
        if p < pipeline.smoothing.resolved_basis_size(p) {
            ds.surface.clone()
        } else {
            smooth_surface(&ds.surface, ds.exposures.as_ref(), &pipeline.smoothing)?.0
        }
    };
    let mu = mean_function(&fit_input)?;
    let fstar = center(&fit_input, &mu)?;
    let features = feature_matrix(&fstar, &featurizer)?;

    let mut lines = header_lines(cfg, &[&ds]);
    lines.push(format!(
        "featurizer: {}{}",
        features.featurizer_tag,
        if features.params_fingerprint.is_empty() {
            String::new()
        } else {
            format!(" fingerprint={}", features.params_fingerprint)
        }
    ));
    lines.push(format!(
        "columns: retained={} dropped={}",
        features.matrix.ncols(),
        features.dropped_columns.len()
    ));
    let mut out = commented(&lines);
    out.push_str("age");
    for c in 1..=features.matrix.ncols() {
        out.push_str(&format!(",f{c}"));
    }
    out.push('\n');
    for (i, label) in ds.surface.ages().labels().iter().enumerate() {
        out.push_str(label);
        for c in 0..features.matrix.ncols() {
            out.push_str(&format!(",{}", features.matrix[(i, c)]));
        }
        out.push('\n');
    }
    write_file(&cfg.out_dir, "features.csv", &out)?;
    println!(
        "features: {} ages × {} columns written",
        ds.surface.n_ages(),
        features.matrix.ncols()
    );
    Ok(())
}
