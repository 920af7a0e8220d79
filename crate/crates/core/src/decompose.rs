//! Mean adjustment, signature feature matrices, and the principal-component
//! decompositions producing age-profile basis functions and per-year scores.
//!
//! The signature route characterizes each AGE by the signature of its
//! centered time series; principal components of that feature matrix define
//! age profiles Z_k(x), and each year's curve is projected onto them for its
//! scores β_{t,k}. The classical route applies (optionally year-weighted)
//! functional PCA directly to the centered curves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::paths::embed_series;
use crate::randsig::{randomized_signature, sample_params, Activation};
use crate::signature::truncated_signature;
use crate::surface::MortalitySurface;

/// Columns whose standard deviation falls below this (relative to the scale
/// of the column mean) are treated as constant and dropped.
const ZERO_VARIANCE_TOL: f64 = 1e-12;

/// Singular values below this fraction of the largest are treated as rank
/// deficiency.
const RANK_TOL: f64 = 1e-10;

/// Which signature featurizer builds the per-age feature rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Featurizer {
    Truncated { order: usize },
    Randomized { k: usize, seed: u64, activation: Activation },
}

impl Featurizer {
    pub fn tag(&self) -> String {
        match self {
            Featurizer::Truncated { order } => format!("truncated(m={order})"),
            Featurizer::Randomized { k, seed, activation } => {
                format!("randomized(k={k}, seed={seed}, activation={})", activation.label())
            }
        }
    }
}

/// Standardized per-age signature features.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// p × R, columns standardized to mean 0 and sd 1.
    pub matrix: DMatrix<f64>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    /// Original coordinate indices of dropped (constant) columns.
    pub dropped_columns: Vec<usize>,
    pub featurizer_tag: String,
    /// Parameter fingerprint for the randomized featurizer, empty otherwise.
    pub params_fingerprint: String,
}

/// Pointwise mean curve over years.
pub fn mean_function(smoothed: &MortalitySurface) -> Result<DVector<f64>> {
    if smoothed.n_years() < 2 {
        return Err(Error::RejectedInput(format!(
            "mean function needs at least 2 years, got {}",
            smoothed.n_years()
        )));
    }
    Ok(column_means(smoothed.values()))
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n)
}

/// Mean-adjusted curves: row t holds f̂_t(x) − μ̂(x).
pub fn center(smoothed: &MortalitySurface, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
    if mu.len() != smoothed.n_ages() {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} entries, surface has {} ages",
            mu.len(),
            smoothed.n_ages()
        )));
    }
    let mut out = smoothed.values().clone();
    for t in 0..out.nrows() {
        for i in 0..out.ncols() {
            out[(t, i)] -= mu[i];
        }
    }
    Ok(out)
}

/// Row i = signature features of the embedded time series of age i.
/// The constant signature coefficient is dropped for the truncated route;
/// the randomized route uses the whole terminal state. Columns are then
/// standardized and constant columns removed.
pub fn feature_matrix(fstar: &DMatrix<f64>, featurizer: &Featurizer) -> Result<FeatureMatrix> {
    let n = fstar.nrows();
    let p = fstar.ncols();
    if n < 3 {
        return Err(Error::RejectedInput(format!(
            "feature extraction needs at least 3 years, got {n}"
        )));
    }

    let (rows, fingerprint): (Vec<Result<Vec<f64>>>, String) = match featurizer {
        Featurizer::Truncated { order } => {
            let rows = (0..p)
                .into_par_iter()
                .map(|i| {
                    let series: Vec<f64> = fstar.column(i).iter().copied().collect();
                    let path = embed_series(&series)?;
                    Ok(truncated_signature(&path, *order)?.features().to_vec())
                })
                .collect();
            (rows, String::new())
        }
        Featurizer::Randomized { k, seed, activation } => {
            let params = sample_params(3, *k, *seed, *activation)?;
            let fingerprint = params.fingerprint();
            let rows = (0..p)
                .into_par_iter()
                .map(|i| {
                    let series: Vec<f64> = fstar.column(i).iter().copied().collect();
                    let path = embed_series(&series)?;
                    let sig = randomized_signature(&path, &params)?;
                    Ok(sig.state().iter().copied().collect())
                })
                .collect();
            (rows, fingerprint)
        }
    };

    let mut raw_rows = Vec::with_capacity(p);
    for row in rows {
        raw_rows.push(row?);
    }
    let r_raw = raw_rows.first().map(|r| r.len()).unwrap_or(0);
    if r_raw == 0 {
        return Err(Error::Numeric("featurizer produced no coordinates".into()));
    }

    // Standardize columns; drop the constant ones.
    let mut means = Vec::new();
    let mut sds = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..r_raw {
        let mean = raw_rows.iter().map(|r| r[j]).sum::<f64>() / p as f64;
        let var = raw_rows
            .iter()
            .map(|r| (r[j] - mean) * (r[j] - mean))
            .sum::<f64>()
            / (p as f64 - 1.0).max(1.0);
        let sd = var.sqrt();
        if sd <= ZERO_VARIANCE_TOL * mean.abs().max(1.0) {
            dropped.push(j);
        } else {
            kept.push(j);
            means.push(mean);
            sds.push(sd);
        }
    }
    if kept.is_empty() {
        return Err(Error::Data(
            "every signature coordinate is constant across ages".into(),
        ));
    }
    let matrix = DMatrix::from_fn(p, kept.len(), |i, c| {
        (raw_rows[i][kept[c]] - means[c]) / sds[c]
    });
    Ok(FeatureMatrix {
        matrix,
        column_means: means,
        column_sds: sds,
        dropped_columns: dropped,
        featurizer_tag: featurizer.tag(),
        params_fingerprint: fingerprint,
    })
}

/// Basis functions, scores, residuals, and bookkeeping of one decomposition.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Numeric age grid the basis lives on.
    pub ages: Vec<f64>,
    pub mu: DVector<f64>,
    /// p × K, orthonormal columns; sign fixed so each column's largest-
    /// magnitude entry is positive.
    pub basis: DMatrix<f64>,
    /// n × K score series β_{t,k}.
    pub scores: DMatrix<f64>,
    /// n × p: centered surface − scores · basisᵀ.
    pub residuals: DMatrix<f64>,
    /// Fraction of centered-surface variation captured per component,
    /// non-increasing. For the feature route this is the response sum of
    /// squares captured by each component; for the functional-PCA route it is
    /// the (weighted) eigenvalue ratio.
    pub variance_explained: Vec<f64>,
    pub method: String,
    pub warnings: Vec<String>,
}

impl Decomposition {
    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_years(&self) -> usize {
        self.scores.nrows()
    }

    /// μ + scores·basisᵀ, the in-sample fitted surface.
    pub fn fitted(&self) -> DMatrix<f64> {
        let mut out = &self.scores * self.basis.transpose();
        for t in 0..out.nrows() {
            for i in 0..out.ncols() {
                out[(t, i)] += self.mu[i];
            }
        }
        out
    }

    /// μ + scores·basisᵀ + residuals; equals the smoothed surface.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.fitted() + &self.residuals
    }

    /// Basis values at an off-grid age by linear interpolation.
    pub fn basis_at(&self, age: f64) -> Vec<f64> {
        let k = self.n_components();
        let grid = &self.ages;
        if grid.is_empty() {
            return vec![0.0; k];
        }
        if age <= grid[0] {
            return self.basis.row(0).iter().copied().collect();
        }
        if age >= *grid.last().unwrap() {
            return self.basis.row(grid.len() - 1).iter().copied().collect();
        }
        let hi = grid.partition_point(|g| *g <= age);
        let lo = hi - 1;
        let t = (age - grid[lo]) / (grid[hi] - grid[lo]);
        (0..k)
            .map(|c| self.basis[(lo, c)] * (1.0 - t) + self.basis[(hi, c)] * t)
            .collect()
    }
}

/// Principal component regression on signature features: feature PCs over
/// ages become basis functions Z_k(x); scores come from projecting each
/// year's centered curve onto that orthonormal basis. The regression carries
/// an intercept over ages — standardized feature columns are age-mean-zero,
/// so the constant profile 1/√p joins the basis (this is the intercept the
/// dropped constant signature coefficient would have been collinear with).
/// Components are ordered by the share of the response they explain.
pub fn pcr_decompose(
    ages: &[f64],
    mu: &DVector<f64>,
    fstar: &DMatrix<f64>,
    features: &FeatureMatrix,
    k_components: usize,
) -> Result<Decomposition> {
    let n = fstar.nrows();
    let p = fstar.ncols();
    let r = features.matrix.ncols();
    if features.matrix.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix has {} rows, surface has {p} ages",
            features.matrix.nrows()
        )));
    }
    if ages.len() != p || mu.len() != p {
        return Err(Error::DimensionMismatch(
            "age grid, mean, and surface disagree".into(),
        ));
    }
    let k_cap = p.min(r + 1).min(n);
    if k_components == 0 || k_components > k_cap {
        return Err(Error::RejectedInput(format!(
            "requested {k_components} components, but min(p={p}, R+1={}, n={n}) = {k_cap}",
            r + 1
        )));
    }

    let mut warnings = Vec::new();
    let mut svd = features.matrix.clone().svd(true, false);
    svd.sort_by_singular_values();
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > RANK_TOL * sigma_max)
        .count();
    // The intercept direction adds one dimension orthogonal to every
    // (mean-zero) feature PC.
    let available = rank + 1;
    let k_eff = if available < k_components {
        warnings.push(format!(
            "feature rank supports {available} components, below the requested {k_components}; reduced"
        ));
        available
    } else {
        k_components
    };

    let mut basis = DMatrix::zeros(p, k_eff);
    basis
        .column_mut(0)
        .copy_from(&DVector::from_element(p, 1.0 / (p as f64).sqrt()));
    for c in 1..k_eff {
        basis.set_column(c, &u.column(c - 1));
    }
    fix_signs(&mut basis);
    let scores = fstar * &basis;

    // Order components by explained response sum of squares.
    let total_ssq: f64 = fstar.iter().map(|v| v * v).sum();
    let mut order: Vec<usize> = (0..k_eff).collect();
    let ssq_of = |c: usize| -> f64 { scores.column(c).iter().map(|v| v * v).sum() };
    order.sort_by(|a, b| {
        ssq_of(*b)
            .partial_cmp(&ssq_of(*a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let basis = reorder_columns(&basis, &order);
    let scores = reorder_columns(&scores, &order);
    let variance_explained: Vec<f64> = (0..k_eff)
        .map(|c| {
            if total_ssq > 0.0 {
                scores.column(c).iter().map(|v| v * v).sum::<f64>() / total_ssq
            } else {
                0.0
            }
        })
        .collect();

    let residuals = fstar - &scores * basis.transpose();
    Ok(Decomposition {
        ages: ages.to_vec(),
        mu: mu.clone(),
        basis,
        scores,
        residuals,
        variance_explained,
        method: format!("pcr[{}]", features.featurizer_tag),
        warnings,
    })
}

/// Geometrically decaying year weights w_t ∝ (1−κ)^(n−t), newest year
/// heaviest, normalized to sum 1.
pub fn geometric_weights(n: usize, kappa: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::RejectedInput(format!(
            "geometric weight decay must lie in [0, 1), got {kappa}"
        )));
    }
    let raw: Vec<f64> = (1..=n).map(|t| (1.0 - kappa).powi((n - t) as i32)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Functional PCA of the centered curves: eigen-decomposition of the
/// (optionally year-weighted) covariance over years.
pub fn fpca_decompose(
    ages: &[f64],
    mu: &DVector<f64>,
    fstar: &DMatrix<f64>,
    k_components: usize,
    weights: Option<&[f64]>,
) -> Result<Decomposition> {
    let n = fstar.nrows();
    let p = fstar.ncols();
    if ages.len() != p || mu.len() != p {
        return Err(Error::DimensionMismatch(
            "age grid, mean, and surface disagree".into(),
        ));
    }
    let k_cap = p.min(n);
    if k_components == 0 || k_components > k_cap {
        return Err(Error::RejectedInput(format!(
            "requested {k_components} components, but min(p={p}, n={n}) = {k_cap}"
        )));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {n} years",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::RejectedInput("year weights must be positive".into()));
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        }
        None => vec![1.0 / n as f64; n],
    };

    // Weighted covariance of curves over years.
    let mut cov = DMatrix::zeros(p, p);
    for t in 0..n {
        let row = fstar.row(t);
        // cov += w_t · rowᵀ row
        cov.syger(w[t], &row.transpose(), &row.transpose(), 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..p {
        for j in (i + 1)..p {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut warnings = Vec::new();
    let trace: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let lambda_max = eig.eigenvalues[idx[0]].max(0.0);
    let rank = idx
        .iter()
        .filter(|i| eig.eigenvalues[**i] > RANK_TOL * lambda_max)
        .count();
    let k_eff = if rank < k_components {
        warnings.push(format!(
            "covariance rank {rank} is below the requested {k_components} components; reduced"
        ));
        rank.max(1)
    } else {
        k_components
    };

    let mut basis = DMatrix::zeros(p, k_eff);
    let mut variance_explained = Vec::with_capacity(k_eff);
    for (c, &i) in idx.iter().take(k_eff).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
        variance_explained.push(if trace > 0.0 {
            eig.eigenvalues[i].max(0.0) / trace
        } else {
            0.0
        });
    }
    fix_signs(&mut basis);
    let scores = fstar * &basis;
    let residuals = fstar - &scores * basis.transpose();
    Ok(Decomposition {
        ages: ages.to_vec(),
        mu: mu.clone(),
        basis,
        scores,
        residuals,
        variance_explained,
        method: match weights {
            Some(_) => "fpca[weighted]".to_string(),
            None => "fpca".to_string(),
        },
        warnings,
    })
}

/// Flip column signs so the largest-magnitude entry of each is positive,
/// making outputs comparable across runs and platforms.
fn fix_signs(m: &mut DMatrix<f64>) {
    for c in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for (i, v) in m.column(c).iter().enumerate() {
            if v.abs() > best_mag {
                best_mag = v.abs();
                best = i;
            }
        }
        if m[(best, c)] < 0.0 {
            let mut col = m.column_mut(c);
            col *= -1.0;
        }
    }
}

fn reorder_columns(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), order.len());
    for (c, &src) in order.iter().enumerate() {
        out.set_column(c, &m.column(src));
    }
    out
}
