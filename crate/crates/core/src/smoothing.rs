//! Weighted penalized regression splines for per-year mortality curves.
//!
//! Each year's observed log rates y(x) are fit by minimizing
//! Σ w_i (y_i − f(x_i))² + λ ‖D c‖² over cubic B-spline coefficients c, where
//! D is a difference matrix on the coefficients. λ comes from GCV over a
//! fixed log-spaced grid unless pinned. Weights default to 1 or derive from
//! exposures as an approximate inverse variance of the log rate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::surface::MortalitySurface;

/// Lower bound applied to raw exposure·rate products before normalization.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Spline degree is fixed at cubic.
const DEGREE: usize = 3;

/// GCV grid: 30 log-spaced points spanning 1e-4 … 1e6.
const LAMBDA_GRID_LEN: usize = 30;
const LAMBDA_GRID_LO: f64 = 1e-4;
const LAMBDA_GRID_HI: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    /// Select λ by generalized cross-validation; ties go to the larger λ.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsMode {
    Uniform,
    ExposureBased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig {
    /// Number of B-spline basis functions; `None` resolves to
    /// min(25, p/2) clamped below at 4 for p observations.
    pub basis_size: Option<usize>,
    /// Difference order of the coefficient penalty, 1..=3.
    pub penalty_order: usize,
    pub lambda: LambdaChoice,
    pub weights_mode: WeightsMode,
    /// When set, fitted curves are projected to be non-decreasing from this
    /// age upward (pool-adjacent-violators). Off by default.
    pub monotone_from_age: Option<f64>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            basis_size: None,
            penalty_order: 2,
            lambda: LambdaChoice::Auto,
            weights_mode: WeightsMode::Uniform,
            monotone_from_age: None,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.basis_size {
            if b < 4 {
                return Err(Error::Usage(format!(
                    "basis size must be at least 4, got {b}"
                )));
            }
        }
        if !(1..=3).contains(&self.penalty_order) {
            return Err(Error::Usage(format!(
                "penalty order must be 1, 2, or 3, got {}",
                self.penalty_order
            )));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Usage(format!("lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Basis size actually used for `p` observations.
    pub fn resolved_basis_size(&self, p: usize) -> usize {
        self.basis_size.unwrap_or_else(|| (p / 2).clamp(4, 25))
    }

    pub fn summary(&self) -> String {
        let lambda = match self.lambda {
            LambdaChoice::Auto => "auto".to_string(),
            LambdaChoice::Fixed(l) => format!("{l}"),
        };
        let basis = match self.basis_size {
            Some(b) => b.to_string(),
            None => "auto".to_string(),
        };
        let weights = match self.weights_mode {
            WeightsMode::Uniform => "uniform",
            WeightsMode::ExposureBased => "exposure",
        };
        let monotone = match self.monotone_from_age {
            Some(a) => format!("{a}"),
            None => "off".to_string(),
        };
        format!(
            "basis={basis} penalty_order={} lambda={lambda} weights={weights} monotone_from={monotone}",
            self.penalty_order
        )
    }
}

/// Result of smoothing one curve.
#[derive(Debug, Clone)]
pub struct SmoothedCurve {
    pub fitted: Vec<f64>,
    pub lambda: f64,
    /// Effective degrees of freedom, tr(H).
    pub edf: f64,
}

/// Weights ∝ exposure·rate (approximate inverse variance of the log rate
/// under Poisson deaths), floored at [`WEIGHT_FLOOR`], normalized to mean 1.
pub fn weights_from_exposure(mx: &[f64], exposure: &[f64]) -> Result<Vec<f64>> {
    if mx.len() != exposure.len() {
        return Err(Error::DimensionMismatch(format!(
            "rates ({}) and exposures ({}) differ in length",
            mx.len(),
            exposure.len()
        )));
    }
    if exposure.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::RejectedInput(
            "exposures must be finite and non-negative".into(),
        ));
    }
    if mx.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::RejectedInput(
            "rates must be finite and non-negative".into(),
        ));
    }
    if exposure.iter().all(|e| *e == 0.0) {
        return Err(Error::Data("all exposures are zero".into()));
    }
    let raw: Vec<f64> = mx
        .iter()
        .zip(exposure)
        .map(|(m, e)| (m * e).max(WEIGHT_FLOOR))
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|r| r / mean).collect())
}

/// Smooth one curve on the given age grid.
pub fn smooth_curve(
    ages: &[f64],
    y: &[f64],
    weights: &[f64],
    cfg: &SmoothingConfig,
) -> Result<SmoothedCurve> {
    cfg.validate()?;
    let p = ages.len();
    if y.len() != p || weights.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "ages ({p}), values ({}), and weights ({}) differ in length",
            y.len(),
            weights.len()
        )));
    }
    if ages.iter().chain(y).chain(weights).any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput(
            "smoothing inputs must all be finite".into(),
        ));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::RejectedInput("weights must be non-negative".into()));
    }
    let basis_size = cfg.resolved_basis_size(p);
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < basis_size {
        return Err(Error::Data(format!(
            "need at least {basis_size} positively weighted observations, have {positive}"
        )));
    }

    // Rescaling all weights by a common factor must not change the fit, so
    // normalize to mean 1 up front.
    let w_mean = weights.iter().sum::<f64>() / p as f64;
    let w: Vec<f64> = weights.iter().map(|v| v / w_mean).collect();

    let (lo, hi) = ages
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    if !(hi > lo) {
        return Err(Error::RejectedInput(
            "age grid must span a positive range".into(),
        ));
    }

    let basis = bspline_basis(ages, lo, hi, basis_size);
    let diff = difference_matrix(basis_size, cfg.penalty_order);

    // Pieces shared by every λ. The penalized system is solved through the QR
    // factor of the stacked matrix [√W·X; √λ·D], which squares the condition
    // number only once and keeps the penalty null space intact even for
    // extreme λ.
    let mut xtw = basis.transpose();
    for (i, wi) in w.iter().enumerate() {
        let mut col = xtw.column_mut(i);
        col *= *wi;
    }
    let a_mat = &xtw * &basis;
    let rhs = &xtw * DVector::from_column_slice(y);
    let mut sqrt_w_x = basis.clone();
    for (i, wi) in w.iter().enumerate() {
        let mut row = sqrt_w_x.row_mut(i);
        row *= wi.sqrt();
    }

    let fit_at = |lambda: f64| -> Option<(DVector<f64>, f64, f64)> {
        let rows = p + diff.nrows();
        let mut stacked = DMatrix::zeros(rows, basis_size);
        stacked.rows_mut(0, p).copy_from(&sqrt_w_x);
        stacked
            .rows_mut(p, diff.nrows())
            .copy_from(&(&diff * lambda.sqrt()));
        let qr = stacked.qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diag_min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(diag_max > 0.0) || diag_min < 1e-12 * diag_max {
            return None;
        }
        let rt = r.transpose();
        let solve_system = |b: &DVector<f64>| -> Option<DVector<f64>> {
            let u = rt.solve_lower_triangular(b)?;
            r.solve_upper_triangular(&u)
        };
        let coef = solve_system(&rhs)?;
        let fitted = &basis * &coef;
        let rss_w: f64 = (0..p)
            .map(|i| w[i] * (y[i] - fitted[i]) * (y[i] - fitted[i]))
            .sum();
        // tr(H) = tr(M⁻¹ XᵀWX) with M = RᵀR.
        let mut edf = 0.0;
        for j in 0..basis_size {
            let col = a_mat.column(j).into_owned();
            let v = solve_system(&col)?;
            edf += v[j];
        }
        Some((fitted, rss_w, edf))
    };

    let (fitted, lambda, edf) = match cfg.lambda {
        LambdaChoice::Fixed(lambda) => {
            let (fitted, _, edf) = fit_at(lambda).ok_or(Error::SingularSystem { lambda })?;
            (fitted, lambda, edf)
        }
        LambdaChoice::Auto => {
            let mut best: Option<(f64, DVector<f64>, f64, f64)> = None;
            let log_lo = LAMBDA_GRID_LO.ln();
            let log_hi = LAMBDA_GRID_HI.ln();
            for g in 0..LAMBDA_GRID_LEN {
                let lambda = (log_lo
                    + (log_hi - log_lo) * g as f64 / (LAMBDA_GRID_LEN - 1) as f64)
                    .exp();
                if let Some((fitted, rss_w, edf)) = fit_at(lambda) {
                    let denom = p as f64 - edf;
                    if denom <= 1e-8 {
                        continue;
                    }
                    let gcv = p as f64 * rss_w / (denom * denom);
                    // `<=` so exact ties resolve to the larger (later) λ.
                    if best.as_ref().map_or(true, |(g0, ..)| gcv <= *g0) {
                        best = Some((gcv, fitted, lambda, edf));
                    }
                }
            }
            let (_, fitted, lambda, edf) = best.ok_or(Error::SingularSystem {
                lambda: LAMBDA_GRID_LO,
            })?;
            (fitted, lambda, edf)
        }
    };

    let mut out: Vec<f64> = fitted.iter().copied().collect();
    if let Some(from_age) = cfg.monotone_from_age {
        isotonic_from(ages, &mut out, from_age);
    }
    Ok(SmoothedCurve {
        fitted: out,
        lambda,
        edf,
    })
}

/// Per-run smoothing diagnostics: the λ and effective dof chosen per year.
#[derive(Debug, Clone)]
pub struct SmoothingDiagnostics {
    pub lambdas: Vec<f64>,
    pub edfs: Vec<f64>,
    pub config_summary: String,
}

/// Smooth every year of a surface independently. `exposures`, when given,
/// must be a year × age matrix matching the surface; it feeds the
/// exposure-based weights (the surface holds log rates, so rates are
/// exponentiated for the weight product).
pub fn smooth_surface(
    raw: &MortalitySurface,
    exposures: Option<&DMatrix<f64>>,
    cfg: &SmoothingConfig,
) -> Result<(MortalitySurface, SmoothingDiagnostics)> {
    cfg.validate()?;
    let p = raw.n_ages();
    let n = raw.n_years();
    if let Some(e) = exposures {
        if e.nrows() != n || e.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "exposure matrix is {}×{}, surface is {n}×{p}",
                e.nrows(),
                e.ncols()
            )));
        }
    }
    if matches!(cfg.weights_mode, WeightsMode::ExposureBased) && exposures.is_none() {
        return Err(Error::Usage(
            "exposure-based weights requested but no exposures supplied".into(),
        ));
    }
    let ages = raw.ages().grid_values();

    let rows: Vec<Result<SmoothedCurve>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let y: Vec<f64> = raw.values().row(t).iter().copied().collect();
            let weights = match (cfg.weights_mode, exposures) {
                (WeightsMode::ExposureBased, Some(e)) => {
                    let mx: Vec<f64> = y.iter().map(|v| v.exp()).collect();
                    let expo: Vec<f64> = e.row(t).iter().copied().collect();
                    weights_from_exposure(&mx, &expo)?
                }
                _ => vec![1.0; p],
            };
            smooth_curve(&ages, &y, &weights, cfg)
        })
        .collect();

    let mut values = raw.values().clone();
    let mut lambdas = Vec::with_capacity(n);
    let mut edfs = Vec::with_capacity(n);
    for (t, row) in rows.into_iter().enumerate() {
        let curve = row?;
        for (i, v) in curve.fitted.iter().enumerate() {
            values[(t, i)] = *v;
        }
        lambdas.push(curve.lambda);
        edfs.push(curve.edf);
    }
    let smoothed = raw.with_values(values)?;
    Ok((
        smoothed,
        SmoothingDiagnostics {
            lambdas,
            edfs,
            config_summary: cfg.summary(),
        },
    ))
}

/// Cubic B-spline design matrix on `x` with `n_basis` functions on a uniform
/// knot grid extending `DEGREE` cells beyond [lo, hi] on both sides.
///
/// The uniform (unclamped) grid keeps coefficient-difference penalties honest:
/// polynomials of degree below the penalty order have exactly zero penalty,
/// so e.g. a straight line survives any λ under the order-2 penalty.
pub fn bspline_basis(x: &[f64], lo: f64, hi: f64, n_basis: usize) -> DMatrix<f64> {
    debug_assert!(n_basis >= DEGREE + 1);
    // Interior cell count; knots t_j = lo + (j − DEGREE)·h.
    let cells = n_basis - DEGREE;
    let h = (hi - lo) / cells as f64;
    let knot = |j: isize| lo + (j as f64 - DEGREE as f64) * h;

    let mut design = DMatrix::zeros(x.len(), n_basis);
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    let mut vals = [0.0; DEGREE + 1];
    for (row, &xi) in x.iter().enumerate() {
        let xi = xi.clamp(lo, hi);
        // Knot span: largest s with knot(s) <= xi < knot(s+1), s in
        // [DEGREE, n_basis-1]; x == hi lands in the last span.
        let span = (DEGREE + ((xi - lo) / h).floor() as usize).min(n_basis - 1);
        // Cox–de Boor triangular scheme for the DEGREE+1 non-zero functions.
        vals[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = xi - knot(span as isize + 1 - j as isize);
            right[j] = knot(span as isize + j as isize) - xi;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        for r in 0..=DEGREE {
            design[(row, span - DEGREE + r)] = vals[r];
        }
    }
    design
}

/// Order-k forward difference matrix on `size` coefficients.
fn difference_matrix(size: usize, order: usize) -> DMatrix<f64> {
    let coeffs: &[f64] = match order {
        1 => &[-1.0, 1.0],
        2 => &[1.0, -2.0, 1.0],
        3 => &[-1.0, 3.0, -3.0, 1.0],
        _ => unreachable!("penalty order validated earlier"),
    };
    let rows = size.saturating_sub(order);
    let mut d = DMatrix::zeros(rows, size);
    for r in 0..rows {
        for (j, c) in coeffs.iter().enumerate() {
            d[(r, r + j)] = *c;
        }
    }
    d
}

/// Pool-adjacent-violators projection: make `values` non-decreasing on the
/// suffix of ages ≥ `from_age`.
fn isotonic_from(ages: &[f64], values: &mut [f64], from_age: f64) {
    let start = match ages.iter().position(|a| *a >= from_age) {
        Some(s) => s,
        None => return,
    };
    let tail = &mut values[start..];
    let n = tail.len();
    if n < 2 {
        return;
    }
    // Blocks of (mean, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &v in tail.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let merged = (m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64;
            blocks.pop();
            *blocks.last_mut().unwrap() = (merged, c1 + c2);
        }
    }
    let mut idx = 0;
    for (mean, count) in blocks {
        for _ in 0..count {
            tail[idx] = mean;
            idx += 1;
        }
    }
}
