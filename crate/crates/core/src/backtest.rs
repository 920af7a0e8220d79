//! Expanding-window evaluation: fit each model on years ≤ origin, forecast,
//! score against realized curves, and aggregate MSE by horizon.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::surface::MortalitySurface;

/// Minimum number of training years at the first origin.
pub const MIN_TRAINING_YEARS: i32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestPlan {
    /// First year whose realized curve is scored.
    pub first_test_year: i32,
    /// Last year whose realized curve is scored; origins advance to
    /// `last_test_year − 1`.
    pub last_test_year: i32,
    /// Horizons to score, each ≥ 1.
    pub horizons: Vec<usize>,
    /// Master seed; per-origin seeds derive from it so origins are
    /// independent yet reproducible.
    pub master_seed: u64,
}

impl BacktestPlan {
    pub fn validate(&self, surface: &MortalitySurface) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.iter().any(|h| *h < 1) {
            return Err(Error::Usage("horizons must be a non-empty list of values ≥ 1".into()));
        }
        if self.first_test_year > self.last_test_year {
            return Err(Error::Usage(format!(
                "test window {}..{} is empty",
                self.first_test_year, self.last_test_year
            )));
        }
        if self.first_test_year - surface.first_year() < MIN_TRAINING_YEARS {
            return Err(Error::Usage(format!(
                "first test year {} leaves {} training years; at least {MIN_TRAINING_YEARS} required",
                self.first_test_year,
                self.first_test_year - surface.first_year()
            )));
        }
        if self.last_test_year > surface.last_year() || self.first_test_year <= surface.first_year()
        {
            return Err(Error::Data(format!(
                "test window {}..{} falls outside the data range {}..{}",
                self.first_test_year,
                self.last_test_year,
                surface.first_year(),
                surface.last_year()
            )));
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> usize {
        *self.horizons.iter().max().expect("validated non-empty")
    }
}

/// Per-origin seed: splitmix64 finalizer over the master seed and origin.
pub fn derive_seed(master: u64, origin: i32) -> u64 {
    let mut z = master ^ (origin as i64 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One scored (model, origin, horizon) triple with full curves.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub model: String,
    pub origin: i32,
    pub horizon: usize,
    pub target_year: i32,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// A model/origin pair whose fit or forecast failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedOrigin {
    pub model: String,
    pub origin: i32,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub dataset: String,
    pub age_labels: Vec<String>,
    pub records: Vec<ForecastRecord>,
    pub skipped: Vec<SkippedOrigin>,
    pub master_seed: u64,
    pub data_fingerprint: String,
}

impl BacktestReport {
    pub fn is_complete(&self) -> bool {
        self.skipped.is_empty()
    }

    /// Pooled MSE per (model, horizon), Eq.-style: mean squared error over
    /// all scored years and ages sharing that horizon. Sorted by model label
    /// then horizon.
    pub fn mse_summary(&self) -> Vec<(String, usize, f64)> {
        let mut keys: Vec<(String, usize)> = self
            .records
            .iter()
            .map(|r| (r.model.clone(), r.horizon))
            .collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(model, horizon)| {
                let curves: Vec<&ForecastRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.model == model && r.horizon == horizon)
                    .collect();
                let observed: Vec<Vec<f64>> = curves.iter().map(|r| r.observed.clone()).collect();
                let predicted: Vec<Vec<f64>> = curves.iter().map(|r| r.predicted.clone()).collect();
                let value = mse(&observed, &predicted).expect("records share the age grid");
                (model, horizon, value)
            })
            .collect()
    }

    /// Long-format CSV body: model, origin, horizon, target_year, age,
    /// observed, predicted.
    pub fn long_csv(&self) -> String {
        let mut rows = self.records.clone();
        rows.sort_by(|a, b| {
            (&a.model, a.origin, a.horizon)
                .partial_cmp(&(&b.model, b.origin, b.horizon))
                .unwrap()
        });
        let mut out = String::from("dataset,model,origin,horizon,target_year,age,observed,predicted\n");
        for r in rows {
            for (i, label) in self.age_labels.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    self.dataset,
                    r.model,
                    r.origin,
                    r.horizon,
                    r.target_year,
                    label,
                    r.observed[i],
                    r.predicted[i]
                ));
            }
        }
        out
    }

    /// Summary CSV body: dataset, model, horizon, mse.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("dataset,model,horizon,mse\n");
        for (model, horizon, value) in self.mse_summary() {
            out.push_str(&format!("{},{model},{horizon},{value}\n", self.dataset));
        }
        out
    }
}

/// Mean squared error over matched curve collections:
/// (1/(p·q)) Σ_t Σ_i (y_t(x_i) − ŷ_t(x_i))².
pub fn mse(observed: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "observed ({}) and predicted ({}) curve counts differ or are empty",
            observed.len(),
            predicted.len()
        )));
    }
    let p = observed[0].len();
    let mut total = 0.0;
    for (o, f) in observed.iter().zip(predicted) {
        if o.len() != p || f.len() != p {
            return Err(Error::DimensionMismatch(
                "curves cover different age grids".into(),
            ));
        }
        for (a, b) in o.iter().zip(f) {
            let d = a - b;
            total += d * d;
        }
    }
    Ok(total / (observed.len() * p) as f64)
}

/// Run the expanding-window protocol: for each origin o from
/// `first_test_year − 1` to `last_test_year − 1`, fit every model on years
/// ≤ o and score its forecasts at the realizable listed horizons.
pub fn run_backtest(
    surface: &MortalitySurface,
    plan: &BacktestPlan,
    models: &[(String, &dyn Forecaster)],
) -> Result<BacktestReport> {
    plan.validate(surface)?;
    if models.is_empty() {
        return Err(Error::Usage("no models given to backtest".into()));
    }
    let h_max = plan.max_horizon();
    let origins: Vec<i32> = (plan.first_test_year - 1..=plan.last_test_year - 1).collect();

    // Origins are independent; results are merged in origin order so the
    // report is deterministic regardless of scheduling.
    let per_origin: Vec<(Vec<ForecastRecord>, Vec<SkippedOrigin>)> = origins
        .par_iter()
        .map(|&origin| {
            let mut records = Vec::new();
            let mut skipped = Vec::new();
            let train = match surface.up_to_year(origin) {
                Ok(t) => t,
                Err(e) => {
                    for (label, _) in models {
                        skipped.push(SkippedOrigin {
                            model: label.clone(),
                            origin,
                            reason: e.to_string(),
                        });
                    }
                    return (records, skipped);
                }
            };
            let h_avail = (plan.last_test_year - origin) as usize;
            let h_here = h_max.min(h_avail);
            let seed = derive_seed(plan.master_seed, origin);
            for (label, model) in models {
                match model.forecast(&train, h_here, seed) {
                    Ok(pred) => {
                        for &h in &plan.horizons {
                            if h > h_here {
                                continue;
                            }
                            let target = origin + h as i32;
                            let observed = surface
                                .row_for_year(target)
                                .expect("target year inside surface by construction");
                            let predicted: Vec<f64> =
                                pred.row(h - 1).iter().copied().collect();
                            records.push(ForecastRecord {
                                model: label.clone(),
                                origin,
                                horizon: h,
                                target_year: target,
                                observed,
                                predicted,
                            });
                        }
                    }
                    Err(e) => skipped.push(SkippedOrigin {
                        model: label.clone(),
                        origin,
                        reason: e.to_string(),
                    }),
                }
            }
            (records, skipped)
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (r, s) in per_origin {
        records.extend(r);
        skipped.extend(s);
    }
    Ok(BacktestReport {
        dataset: surface
            .provenance
            .country
            .clone()
            .unwrap_or_else(|| "data".to_string()),
        age_labels: surface.ages().labels(),
        records,
        skipped,
        master_seed: plan.master_seed,
        data_fingerprint: surface.fingerprint(),
    })
}

/// Ascending MSE ranking per horizon.
pub fn compare_models(report: &BacktestReport) -> Vec<(usize, Vec<(String, f64)>)> {
    let summary = report.mse_summary();
    let mut horizons: Vec<usize> = summary.iter().map(|(_, h, _)| *h).collect();
    horizons.sort_unstable();
    horizons.dedup();
    horizons
        .into_iter()
        .map(|h| {
            let mut ranked: Vec<(String, f64)> = summary
                .iter()
                .filter(|(_, hh, _)| *hh == h)
                .map(|(m, _, v)| (m.clone(), *v))
                .collect();
            ranked.sort_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            });
            (h, ranked)
        })
        .collect()
}

/// Per-origin forecast matrices stacked for testing and inspection.
pub fn forecast_matrix_to_curves(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}
