//! End-to-end pipelines: smoothing → centering → decomposition → score
//! forecasting, wrapped behind a single [`Forecaster`] trait so the backtest
//! harness can drive any model uniformly.

use nalgebra::DMatrix;

use crate::decompose::{
    center, feature_matrix, fpca_decompose, geometric_weights, mean_function, pcr_decompose,
    Decomposition, Featurizer,
};
use crate::error::{Error, Result};
use crate::forecast::forecast_surface;
use crate::randsig::Activation;
use crate::smoothing::{smooth_surface, SmoothingConfig, SmoothingDiagnostics};
use crate::surface::MortalitySurface;

/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 6;

/// Default projection dimension for the randomized-signature model.
pub const DEFAULT_RANDSIG_DIM: usize = 100;

/// Default truncation order for the truncated-signature model.
pub const DEFAULT_TRUNC_ORDER: usize = 3;

/// Default geometric decay for the weighted functional-PCA baseline.
pub const DEFAULT_WHU_KAPPA: f64 = 0.05;

/// Which decomposition drives the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// Randomized-signature features feeding principal component regression.
    Hurs { k: usize, activation: Activation },
    /// Truncated-signature features feeding principal component regression.
    Huts { order: usize },
    /// Plain functional PCA of the centered curves.
    Hu,
    /// Functional PCA with geometrically decaying year weights.
    Whu { kappa: f64 },
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Hurs { .. } => "hurs",
            ModelKind::Huts { .. } => "huts",
            ModelKind::Hu => "hu",
            ModelKind::Whu { .. } => "whu",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ModelKind::Hurs { k, activation } => {
                format!("hurs(k={k}, activation={})", activation.label())
            }
            ModelKind::Huts { order } => format!("huts(m={order})"),
            ModelKind::Hu => "hu".to_string(),
            ModelKind::Whu { kappa } => format!("whu(kappa={kappa})"),
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub kind: ModelKind,
    pub components: usize,
    pub smoothing: SmoothingConfig,
}

impl PipelineConfig {
    pub fn new(kind: ModelKind) -> Self {
        PipelineConfig {
            kind,
            components: DEFAULT_COMPONENTS,
            smoothing: SmoothingConfig::default(),
        }
    }
}

/// Everything produced by one pipeline fit.
#[derive(Debug, Clone)]
pub struct FitArtifacts {
    pub smoothed: MortalitySurface,
    pub decomposition: Decomposition,
    pub smoothing: SmoothingDiagnostics,
    /// Featurizer tag + dropped-column count for the signature routes.
    pub feature_summary: Option<String>,
    pub notes: Vec<String>,
}

/// Run smoothing, centering, and the configured decomposition. `seed` only
/// affects the randomized-signature route.
pub fn fit_pipeline(
    raw: &MortalitySurface,
    exposures: Option<&DMatrix<f64>>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<FitArtifacts> {
    if raw.n_years() < 3 {
        return Err(Error::RejectedInput(format!(
            "pipeline needs at least 3 years of data, got {}",
            raw.n_years()
        )));
    }
    if cfg.components == 0 {
        return Err(Error::Usage("component count must be at least 1".into()));
    }
    let p = raw.n_ages();
    let n = raw.n_years();
    let mut notes = Vec::new();

    // Step 1: smoothing. Grids too small to carry the minimum spline basis
    // pass through unsmoothed.
    let (smoothed, diag) = if p < cfg.smoothing.resolved_basis_size(p) {
        notes.push(format!(
            "age grid of {p} is below the minimum basis size; smoothing skipped"
        ));
        (
            raw.clone(),
            SmoothingDiagnostics {
                lambdas: vec![0.0; n],
                edfs: vec![p as f64; n],
                config_summary: format!("{} (skipped)", cfg.smoothing.summary()),
            },
        )
    } else {
        smooth_surface(raw, exposures, &cfg.smoothing)?
    };

    // Step 2: mean adjustment.
    let mu = mean_function(&smoothed)?;
    let fstar = center(&smoothed, &mu)?;
    let ages = smoothed.ages().grid_values();

    // Steps 3–4: decomposition.
    let (decomposition, feature_summary) = match &cfg.kind {
        ModelKind::Hurs { k, activation } => {
            let featurizer = Featurizer::Randomized {
                k: *k,
                seed,
                activation: *activation,
            };
            let features = feature_matrix(&fstar, &featurizer)?;
            let k_eff = cfg
                .components
                .min(p)
                .min(features.matrix.ncols() + 1)
                .min(n);
            if k_eff < cfg.components {
                notes.push(format!(
                    "components reduced from {} to {k_eff} by matrix shape",
                    cfg.components
                ));
            }
            let summary = format!(
                "{} fingerprint={} retained={} dropped={}",
                features.featurizer_tag,
                features.params_fingerprint,
                features.matrix.ncols(),
                features.dropped_columns.len()
            );
            (
                pcr_decompose(&ages, &mu, &fstar, &features, k_eff)?,
                Some(summary),
            )
        }
        ModelKind::Huts { order } => {
            let featurizer = Featurizer::Truncated { order: *order };
            let features = feature_matrix(&fstar, &featurizer)?;
            let k_eff = cfg
                .components
                .min(p)
                .min(features.matrix.ncols() + 1)
                .min(n);
            if k_eff < cfg.components {
                notes.push(format!(
                    "components reduced from {} to {k_eff} by matrix shape",
                    cfg.components
                ));
            }
            let summary = format!(
                "{} retained={} dropped={}",
                features.featurizer_tag,
                features.matrix.ncols(),
                features.dropped_columns.len()
            );
            (
                pcr_decompose(&ages, &mu, &fstar, &features, k_eff)?,
                Some(summary),
            )
        }
        ModelKind::Hu => {
            let k_eff = cfg.components.min(p).min(n);
            if k_eff < cfg.components {
                notes.push(format!(
                    "components reduced from {} to {k_eff} by matrix shape",
                    cfg.components
                ));
            }
            (fpca_decompose(&ages, &mu, &fstar, k_eff, None)?, None)
        }
        ModelKind::Whu { kappa } => {
            let k_eff = cfg.components.min(p).min(n);
            if k_eff < cfg.components {
                notes.push(format!(
                    "components reduced from {} to {k_eff} by matrix shape",
                    cfg.components
                ));
            }
            let w = geometric_weights(n, *kappa)?;
            (fpca_decompose(&ages, &mu, &fstar, k_eff, Some(&w))?, None)
        }
    };
    notes.extend(decomposition.warnings.iter().cloned());

    Ok(FitArtifacts {
        smoothed,
        decomposition,
        smoothing: diag,
        feature_summary,
        notes,
    })
}

/// Anything that can turn a training surface into h curve forecasts.
/// Implementations must be deterministic given `(train, h, seed)`.
pub trait Forecaster: Sync {
    fn label(&self) -> String;

    /// Forecast log-rate curves for horizons 1..=h as an h × p matrix.
    fn forecast(&self, train: &MortalitySurface, h: usize, seed: u64) -> Result<DMatrix<f64>>;
}

/// The full HU-family pipeline as a forecaster. Exposures, when present,
/// cover the complete surface and are sliced to each training window.
pub struct PipelineForecaster {
    pub config: PipelineConfig,
    pub exposures: Option<(i32, DMatrix<f64>)>,
}

impl PipelineForecaster {
    pub fn new(config: PipelineConfig) -> Self {
        PipelineForecaster {
            config,
            exposures: None,
        }
    }

    pub fn with_exposures(mut self, first_year: i32, exposures: DMatrix<f64>) -> Self {
        self.exposures = Some((first_year, exposures));
        self
    }

    fn exposure_window(&self, train: &MortalitySurface) -> Result<Option<DMatrix<f64>>> {
        match &self.exposures {
            None => Ok(None),
            Some((first_year, full)) => {
                let offset = train.first_year() - first_year;
                if offset < 0 || offset as usize + train.n_years() > full.nrows() {
                    return Err(Error::Data(format!(
                        "exposure matrix starting {first_year} does not cover training years {}..={}",
                        train.first_year(),
                        train.last_year()
                    )));
                }
                Ok(Some(
                    full.rows(offset as usize, train.n_years()).into_owned(),
                ))
            }
        }
    }
}

impl Forecaster for PipelineForecaster {
    fn label(&self) -> String {
        self.config.kind.label().to_string()
    }

    fn forecast(&self, train: &MortalitySurface, h: usize, seed: u64) -> Result<DMatrix<f64>> {
        let expo = self.exposure_window(train)?;
        let fit = fit_pipeline(train, expo.as_ref(), &self.config, seed)?;
        forecast_surface(&fit.decomposition, h)
    }
}

/// Baseline that repeats the last observed curve at every horizon.
pub struct NaiveForecaster;

impl Forecaster for NaiveForecaster {
    fn label(&self) -> String {
        "naive".to_string()
    }

    fn forecast(&self, train: &MortalitySurface, h: usize, _seed: u64) -> Result<DMatrix<f64>> {
        let p = train.n_ages();
        let last = train
            .row_for_year(train.last_year())
            .expect("surface has a last year");
        let mut out = DMatrix::zeros(h, p);
        for j in 0..h {
            for i in 0..p {
                out[(j, i)] = last[i];
            }
        }
        Ok(out)
    }
}
