//! End-to-end integration: fixture ingestion, pipeline fits, forecasting,
//! serialization round trips, and property-based invariants.

use std::path::Path;

use mortsig::config::{resolve, Command};
use mortsig::decompose::{center, mean_function};
use mortsig::forecast::forecast_surface;
use mortsig::io::{
    build_surface, hmd_country_label, parse_csv_matrix, parse_hmd_table, read_with_fingerprint,
    redistribute_exposures, write_surface_csv, BuildOptions, SexColumn,
};
use mortsig::model::{fit_pipeline, ModelKind, PipelineConfig};
use mortsig::paths::{embed_series, from_series, lead_lag, time_augment};
use mortsig::randsig::Activation;
use mortsig::signature::truncated_signature;
use mortsig::smoothing::SmoothingConfig;
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .display()
        .to_string()
}

fn load_fixture_surface() -> mortsig::surface::MortalitySurface {
    let (text, _) = read_with_fingerprint(Path::new(&fixture("synthetic_mx.txt"))).unwrap();
    let records = parse_hmd_table(&text, "synthetic_mx.txt").unwrap();
    let opts = BuildOptions {
        country: hmd_country_label(&text),
        ..BuildOptions::default()
    };
    build_surface(&records, None, &opts).unwrap()
}

#[test]
fn fixture_ingests_with_expected_shape() {
    let s = load_fixture_surface();
    assert_eq!(s.n_years(), 55);
    assert_eq!(s.first_year(), 1960);
    assert_eq!(s.n_ages(), 101);
    assert_eq!(s.ages().label(100), "100+");
    assert_eq!(s.provenance.country.as_deref(), Some("Synthetica"));
    // The fixture has zero/missing cells at age 97 and 99 needing repair.
    assert!(s.provenance.repairs >= 5, "repairs = {}", s.provenance.repairs);
    assert!(s.values().iter().all(|v| v.is_finite()));
}

#[test]
fn fixture_with_exposures_changes_open_group_only_slightly() {
    let (text, _) = read_with_fingerprint(Path::new(&fixture("synthetic_mx.txt"))).unwrap();
    let records = parse_hmd_table(&text, "mx").unwrap();
    let (etext, _) =
        read_with_fingerprint(Path::new(&fixture("synthetic_exposures.txt"))).unwrap();
    let expo = parse_hmd_table(&etext, "expo").unwrap();
    let opts = BuildOptions::default();
    let plain = build_surface(&records, None, &opts).unwrap();
    let weighted = build_surface(&records, Some(&expo), &opts).unwrap();
    // Only the open group (pooled ages ≥ 100) can differ.
    for t in 0..plain.n_years() {
        for i in 0..100 {
            assert_eq!(plain.values()[(t, i)], weighted.values()[(t, i)]);
        }
    }
    let expo_matrix = redistribute_exposures(&expo, &weighted, SexColumn::Total).unwrap();
    assert_eq!(expo_matrix.nrows(), 55);
    assert_eq!(expo_matrix.ncols(), 101);
    assert!(expo_matrix.iter().all(|e| *e >= 0.0));
}

#[test]
fn surface_csv_round_trip_from_fixture() {
    let s = load_fixture_surface();
    let text = write_surface_csv(&s, &["fixture snapshot".to_string()]);
    let back = parse_csv_matrix(&text, "roundtrip").unwrap();
    assert_eq!(s.values(), back.values());
    assert_eq!(s.years(), back.years());
    assert_eq!(s.ages().labels(), back.ages().labels());
}

#[test]
fn pipeline_fit_and_forecast_on_fixture() {
    let s = load_fixture_surface();
    for kind in [
        ModelKind::Hurs {
            k: 24,
            activation: Activation::default_linear(3, 24),
        },
        ModelKind::Huts { order: 2 },
        ModelKind::Hu,
    ] {
        let cfg = PipelineConfig {
            kind,
            components: 4,
            smoothing: SmoothingConfig::default(),
        };
        let fit = fit_pipeline(&s, None, &cfg, 7).unwrap();
        // Reconstruction identity holds on real-shaped data too.
        let recon = fit.decomposition.reconstruct();
        let smoothed = fit.smoothed.values();
        let mut max_err = 0.0f64;
        for t in 0..s.n_years() {
            for i in 0..s.n_ages() {
                max_err = max_err.max((recon[(t, i)] - smoothed[(t, i)]).abs());
            }
        }
        assert!(max_err < 1e-10, "{kind:?}: reconstruction error {max_err}");

        let fc = forecast_surface(&fit.decomposition, 5).unwrap();
        assert_eq!(fc.nrows(), 5);
        assert_eq!(fc.ncols(), 101);
        assert!(fc.iter().all(|v| v.is_finite()));
        // Mortality declines in the fixture; forecasts should stay in band.
        assert!(fc.iter().all(|v| (-15.0..=1.0).contains(v)));
    }
}

#[test]
fn smoothing_reduces_roughness_on_fixture() {
    let s = load_fixture_surface();
    let cfg = SmoothingConfig::default();
    let (smoothed, diag) = mortsig::smoothing::smooth_surface(&s, None, &cfg).unwrap();
    assert_eq!(diag.lambdas.len(), 55);
    let roughness = |values: &nalgebra::DMatrix<f64>, t: usize| -> f64 {
        let mut acc = 0.0;
        for i in 1..values.ncols() - 1 {
            let second = values[(t, i + 1)] - 2.0 * values[(t, i)] + values[(t, i - 1)];
            acc += second * second;
        }
        acc
    };
    let mut reduced = 0;
    for t in 0..55 {
        if roughness(smoothed.values(), t) < roughness(s.values(), t) {
            reduced += 1;
        }
    }
    assert!(reduced >= 50, "smoothing reduced roughness in {reduced}/55 years");
}

#[test]
fn centered_fixture_has_zero_column_means() {
    let s = load_fixture_surface();
    let mu = mean_function(&s).unwrap();
    let fstar = center(&s, &mu).unwrap();
    for i in 0..s.n_ages() {
        let m: f64 = (0..s.n_years()).map(|t| fstar[(t, i)]).sum::<f64>() / 55.0;
        assert!(m.abs() < 1e-12);
    }
}

#[test]
fn config_resolution_round_trip_through_files() {
    let file = "model=hurs\nk=16\nseed=3\nhorizons=1-3\n";
    let cfg = resolve(
        Command::Backtest,
        Some((file, "test.cfg")),
        &[("data".into(), fixture("synthetic_mx.txt"))],
    )
    .unwrap();
    assert_eq!(cfg.k, Some(16));
    assert_eq!(cfg.horizons, vec![1, 2, 3]);
    let line = cfg.resolved_line();
    assert!(line.contains("model=hurs"));
    assert!(line.contains("seed=3"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embed_series_shape_invariants(series in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let p = embed_series(&series).unwrap();
        prop_assert_eq!(p.dim(), 3);
        prop_assert_eq!(p.len(), 2 * series.len() + 1);
        let times: Vec<f64> = p.points().map(|q| q[2]).collect();
        prop_assert_eq!(times[0], 0.0);
        prop_assert_eq!(*times.last().unwrap(), 1.0);
        prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn lead_lag_visits_diagonal_in_order(series in prop::collection::vec(-3.0f64..3.0, 2..25)) {
        let ll = lead_lag(&from_series(&series).unwrap()).unwrap();
        let pts: Vec<Vec<f64>> = ll.points().map(|p| p.to_vec()).collect();
        for (j, x) in series.iter().enumerate() {
            prop_assert_eq!(pts[2 * j][0], *x);
            prop_assert_eq!(pts[2 * j][1], *x);
        }
    }

    #[test]
    fn signature_invariant_under_duplicated_point(
        series in prop::collection::vec(-2.0f64..2.0, 3..12),
        at in 0usize..12,
    ) {
        let base = time_augment(&from_series(&series).unwrap());
        let sig = truncated_signature(&base, 3).unwrap();
        let idx = at.min(base.len() - 1);
        let mut pts: Vec<Vec<f64>> = base.points().map(|p| p.to_vec()).collect();
        pts.insert(idx, pts[idx].clone());
        let dup = mortsig::paths::Path::from_points(&pts).unwrap();
        let sig_dup = truncated_signature(&dup, 3).unwrap();
        for (a, b) in sig.coeffs().iter().zip(sig_dup.coeffs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_additivity_property(
        obs1 in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 4), 1..6),
        obs2 in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 4), 1..6),
    ) {
        let shift = |c: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            c.iter().map(|r| r.iter().map(|v| v + 0.3).collect()).collect()
        };
        let pred1 = shift(&obs1);
        let pred2 = shift(&obs2);
        let m1 = mortsig::backtest::mse(&obs1, &pred1).unwrap();
        let m2 = mortsig::backtest::mse(&obs2, &pred2).unwrap();
        let mut all_o = obs1.clone();
        all_o.extend(obs2.clone());
        let mut all_p = pred1;
        all_p.extend(pred2);
        let pooled = mortsig::backtest::mse(&all_o, &all_p).unwrap();
        let weighted = (m1 * obs1.len() as f64 + m2 * obs2.len() as f64)
            / (obs1.len() + obs2.len()) as f64;
        prop_assert!((pooled - weighted).abs() < 1e-12);
    }
}
