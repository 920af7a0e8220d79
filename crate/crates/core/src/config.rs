//! Run configuration: defaults, `key=value` config files, and flag overrides
//! share one key space. Precedence is defaults < config file < flags, and the
//! fully resolved configuration is echoed into every output file header.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::io::SexColumn;
use crate::model::{
    ModelKind, PipelineConfig, DEFAULT_COMPONENTS, DEFAULT_RANDSIG_DIM, DEFAULT_TRUNC_ORDER,
    DEFAULT_WHU_KAPPA,
};
use crate::randsig::Activation;
use crate::smoothing::{LambdaChoice, SmoothingConfig, WeightsMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Forecast,
    Backtest,
    Features,
}

impl Command {
    pub fn label(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Forecast => "forecast",
            Command::Backtest => "backtest",
            Command::Features => "features",
        }
    }
}

/// Every tunable of a run, before model-specific validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub data: Vec<PathBuf>,
    pub exposures: Vec<PathBuf>,
    pub model: String,
    pub k: Option<usize>,
    pub order: Option<usize>,
    pub components: usize,
    pub activation: Option<String>,
    pub kappa: Option<f64>,
    pub seed: u64,
    pub sex: SexColumn,
    pub max_age: u32,
    pub start_year: Option<i32>,
    pub end_year: Option<i32>,
    pub horizons: Vec<usize>,
    /// Backtest window: (first test year, last test year).
    pub window: Option<(i32, i32)>,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub basis_size: Option<usize>,
    pub penalty_order: usize,
    /// None = GCV; Some(λ) pins the smoothing parameter.
    pub lambda: Option<f64>,
    pub weights: WeightsMode,
    pub monotone_from: Option<f64>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            data: Vec::new(),
            exposures: Vec::new(),
            model: "hurs".to_string(),
            k: None,
            order: None,
            components: DEFAULT_COMPONENTS,
            activation: None,
            kappa: None,
            seed: 0,
            sex: SexColumn::Total,
            max_age: 100,
            start_year: None,
            end_year: None,
            horizons: (1..=10).collect(),
            window: None,
            out_dir: PathBuf::from("out"),
            jobs: None,
            basis_size: None,
            penalty_order: 2,
            lambda: None,
            weights: WeightsMode::Uniform,
            monotone_from: None,
        }
    }

    /// Apply one `key=value` setting (shared by config files and flags).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let usage = |msg: String| Error::Usage(msg);
        match key {
            "data" => {
                self.data = split_list(value).into_iter().map(PathBuf::from).collect();
            }
            "exposures" => {
                self.exposures = split_list(value).into_iter().map(PathBuf::from).collect();
            }
            "model" => {
                let v = value.to_ascii_lowercase();
                for token in v.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    if !["hurs", "huts", "hu", "whu", "naive"].contains(&token) {
                        return Err(usage(format!(
                            "unknown model '{token}' (expected hurs, huts, hu, whu, or naive)"
                        )));
                    }
                }
                self.model = v;
            }
            "k" => self.k = Some(parse_num(key, value)?),
            "order" => self.order = Some(parse_num(key, value)?),
            "components" => self.components = parse_num(key, value)?,
            "activation" => self.activation = Some(value.to_string()),
            "kappa" => self.kappa = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "sex" => self.sex = SexColumn::parse(value)?,
            "max-age" => self.max_age = parse_num(key, value)?,
            "start-year" => self.start_year = Some(parse_num(key, value)?),
            "end-year" => self.end_year = Some(parse_num(key, value)?),
            "horizons" => self.horizons = parse_horizons(value)?,
            "window" => self.window = Some(parse_window(value)?),
            "out" => self.out_dir = PathBuf::from(value),
            "jobs" => self.jobs = Some(parse_num(key, value)?),
            "basis-size" => self.basis_size = Some(parse_num(key, value)?),
            "penalty-order" => self.penalty_order = parse_num(key, value)?,
            "lambda" => {
                self.lambda = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "weights" => {
                self.weights = match value.to_ascii_lowercase().as_str() {
                    "uniform" => WeightsMode::Uniform,
                    "exposure" => WeightsMode::ExposureBased,
                    other => {
                        return Err(usage(format!(
                            "unknown weights mode '{other}' (expected uniform or exposure)"
                        )))
                    }
                }
            }
            "monotone-from" => self.monotone_from = Some(parse_num(key, value)?),
            other => return Err(usage(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Comma-separated model labels (a single label for fit/forecast/features,
    /// possibly several for backtest comparisons).
    pub fn model_list(&self) -> Vec<String> {
        self.model
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// Model-specific validation: k only for hurs, order only for huts,
    /// kappa only for whu, activation only for hurs.
    pub fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return Err(Error::Usage("no input data given (set data=...)".into()));
        }
        if !self.exposures.is_empty() && self.exposures.len() != self.data.len() {
            return Err(Error::Usage(format!(
                "{} exposure files for {} data files",
                self.exposures.len(),
                self.data.len()
            )));
        }
        let models = self.model_list();
        if models.is_empty() {
            return Err(Error::Usage("model list is empty".into()));
        }
        if !matches!(self.command, Command::Backtest) {
            if models.len() > 1 {
                return Err(Error::Usage(format!(
                    "{} takes a single model, got '{}'",
                    self.command.label(),
                    self.model
                )));
            }
            if models[0] == "naive" {
                return Err(Error::Usage(
                    "the naive baseline is only available in backtests".into(),
                ));
            }
        }
        let has = |m: &str| models.iter().any(|x| x == m);
        if self.k.is_some() && !has("hurs") {
            return Err(Error::Usage("k applies only to hurs".into()));
        }
        if self.activation.is_some() && !has("hurs") {
            return Err(Error::Usage("activation applies only to hurs".into()));
        }
        if self.order.is_some() && !has("huts") {
            return Err(Error::Usage("order applies only to huts".into()));
        }
        if self.kappa.is_some() && !has("whu") {
            return Err(Error::Usage("kappa applies only to whu".into()));
        }
        if self.components == 0 {
            return Err(Error::Usage("components must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|h| *h == 0) {
            return Err(Error::Usage("horizons must be ≥ 1".into()));
        }
        if matches!(self.weights, WeightsMode::ExposureBased) && self.exposures.is_empty() {
            return Err(Error::Usage(
                "weights=exposure requires exposures=<files>".into(),
            ));
        }
        self.smoothing_config()?.validate()?;
        Ok(())
    }

    pub fn parsed_activation(&self, k: usize) -> Result<Activation> {
        match self.activation.as_deref() {
            None | Some("linear") => Ok(Activation::default_linear(3, k)),
            Some(spec) => parse_activation(spec),
        }
    }

    /// The pipeline configuration for the selected model.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let kind = match self.model.as_str() {
            "hurs" => {
                let k = self.k.unwrap_or(DEFAULT_RANDSIG_DIM);
                ModelKind::Hurs {
                    k,
                    activation: self.parsed_activation(k)?,
                }
            }
            "huts" => ModelKind::Huts {
                order: self.order.unwrap_or(DEFAULT_TRUNC_ORDER),
            },
            "hu" => ModelKind::Hu,
            "whu" => ModelKind::Whu {
                kappa: self.kappa.unwrap_or(DEFAULT_WHU_KAPPA),
            },
            other => return Err(Error::Usage(format!("unknown model '{other}'"))),
        };
        Ok(PipelineConfig {
            kind,
            components: self.components,
            smoothing: self.smoothing_config()?,
        })
    }

    /// Pipeline configurations for every model label in a comparison run.
    pub fn pipeline_config_for(&self, model: &str) -> Result<PipelineConfig> {
        let mut alt = self.clone();
        alt.model = model.to_string();
        if model != "hurs" {
            alt.k = None;
            alt.activation = None;
        }
        if model != "huts" {
            alt.order = None;
        }
        if model != "whu" {
            alt.kappa = None;
        }
        alt.pipeline_config()
    }

    pub fn smoothing_config(&self) -> Result<SmoothingConfig> {
        Ok(SmoothingConfig {
            basis_size: self.basis_size,
            penalty_order: self.penalty_order,
            lambda: match self.lambda {
                None => LambdaChoice::Auto,
                Some(l) => LambdaChoice::Fixed(l),
            },
            weights_mode: self.weights,
            monotone_from_age: self.monotone_from,
        })
    }

    /// Canonical sorted key=value view, used for echoing and file headers.
    pub fn resolved_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vec![
            ("command".into(), self.command.label().into()),
            (
                "data".into(),
                self.data
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            (
                "exposures".into(),
                self.exposures
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            ("model".into(), self.model.clone()),
            ("k".into(), opt_str(self.k)),
            ("order".into(), opt_str(self.order)),
            ("components".into(), self.components.to_string()),
            (
                "activation".into(),
                self.activation.clone().unwrap_or_else(|| "linear".into()),
            ),
            ("kappa".into(), opt_str(self.kappa)),
            ("seed".into(), self.seed.to_string()),
            ("sex".into(), self.sex.label().into()),
            ("max-age".into(), self.max_age.to_string()),
            ("start-year".into(), opt_str(self.start_year)),
            ("end-year".into(), opt_str(self.end_year)),
            (
                "horizons".into(),
                self.horizons
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "window".into(),
                self.window
                    .map(|(a, b)| format!("{a}:{b}"))
                    .unwrap_or_default(),
            ),
            ("out".into(), self.out_dir.display().to_string()),
            ("jobs".into(), opt_str(self.jobs)),
            ("basis-size".into(), opt_str(self.basis_size)),
            ("penalty-order".into(), self.penalty_order.to_string()),
            (
                "lambda".into(),
                self.lambda.map(|l| l.to_string()).unwrap_or_else(|| "auto".into()),
            ),
            (
                "weights".into(),
                match self.weights {
                    WeightsMode::Uniform => "uniform".into(),
                    WeightsMode::ExposureBased => "exposure".into(),
                },
            ),
            ("monotone-from".into(), opt_str(self.monotone_from)),
        ];
        pairs.sort();
        pairs
    }

    pub fn resolved_line(&self) -> String {
        self.resolved_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Usage(format!("invalid value '{value}' for {key}")))
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split([',', ';'])
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Horizon lists accept commas and inclusive ranges: "1,5,10" or "1-10".
pub fn parse_horizons(value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((a, b)) = part.split_once('-') {
            let lo: usize = parse_num("horizons", a.trim())?;
            let hi: usize = parse_num("horizons", b.trim())?;
            if lo == 0 || hi < lo {
                return Err(Error::Usage(format!("bad horizon range '{part}'")));
            }
            out.extend(lo..=hi);
        } else {
            let h: usize = parse_num("horizons", part)?;
            if h == 0 {
                return Err(Error::Usage("horizons must be ≥ 1".into()));
            }
            out.push(h);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Usage("horizons list is empty".into()));
    }
    Ok(out)
}

/// Backtest window "FIRST:LAST" (test years).
pub fn parse_window(value: &str) -> Result<(i32, i32)> {
    let (a, b) = value
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("window '{value}' must look like FIRST:LAST")))?;
    let first: i32 = parse_num("window", a.trim())?;
    let last: i32 = parse_num("window", b.trim())?;
    if first > last {
        return Err(Error::Usage(format!("window '{value}' is empty")));
    }
    Ok((first, last))
}

/// Activation spec: "linear", "linear:<slope>", "tanh", "identity",
/// "constant:<value>".
pub fn parse_activation(spec: &str) -> Result<Activation> {
    let lower = spec.to_ascii_lowercase();
    if lower == "tanh" {
        return Ok(Activation::Tanh);
    }
    if lower == "identity" {
        return Ok(Activation::Identity);
    }
    if let Some(rest) = lower.strip_prefix("linear:") {
        let scale: f64 = rest
            .parse()
            .map_err(|_| Error::Usage(format!("bad linear activation slope '{rest}'")))?;
        return Ok(Activation::Linear { scale });
    }
    if let Some(rest) = lower.strip_prefix("constant:") {
        let value: f64 = rest
            .parse()
            .map_err(|_| Error::Usage(format!("bad constant activation value '{rest}'")))?;
        return Ok(Activation::Constant { value });
    }
    Err(Error::Usage(format!(
        "unknown activation '{spec}' (expected linear[:slope], tanh, identity, or constant:value)"
    )))
}

/// Parse a line-oriented `key=value` config file ('#' lines are comments).
pub fn parse_config_file(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            msg: format!("expected key=value, found '{line}'"),
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Build a config from defaults, then a config file, then flag overrides.
pub fn resolve(
    command: Command,
    config_file: Option<(&str, &str)>,
    overrides: &[(String, String)],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command);
    if let Some((text, source)) = config_file {
        for (key, value) in parse_config_file(text, source)? {
            cfg.apply(&key, &value)?;
        }
    }
    for (key, value) in overrides {
        cfg.apply(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
