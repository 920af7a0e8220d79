//! Sampled paths and the series-to-path embedding (basepoint, lead-lag, time
//! augmentation) applied before any signature computation.
//!
//! All maps here are pure and deterministic. The embedding composition is
//! fixed as basepoint → lead-lag → time so a scalar series always becomes a
//! 3-dimensional path; the lead-lag variant is the "lead advances first"
//! interleaving, producing 2N+1 points from N+1.

use crate::error::{Error, Result};

/// A d-dimensional path sampled at N+1 points (N ≥ 1), stored row-major and
/// interpreted as piecewise linear with equidistant parameterization on [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    data: Vec<f64>,
}

impl Path {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::RejectedInput("path dimension must be at least 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not tile into points of dimension {dim}",
                data.len()
            )));
        }
        if data.len() / dim < 2 {
            return Err(Error::RejectedInput(
                "a path needs at least two points".into(),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::RejectedInput(format!(
                "path contains non-finite value {bad}"
            )));
        }
        Ok(Path { dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(
                "points have inconsistent dimensions".into(),
            ));
        }
        Path::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sample points, N+1.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of linear segments, N.
    pub fn num_segments(&self) -> usize {
        self.len() - 1
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Increment of segment j: point j+1 − point j.
    pub fn increment(&self, j: usize) -> Vec<f64> {
        let a = self.point(j);
        let b = self.point(j + 1);
        a.iter().zip(b).map(|(x, y)| y - x).collect()
    }
}

/// Lift a scalar series into a 1-dimensional path.
pub fn from_series(values: &[f64]) -> Result<Path> {
    if values.len() < 2 {
        return Err(Error::RejectedInput(format!(
            "series of length {} is too short to form a path (need at least 2)",
            values.len()
        )));
    }
    Path::new(1, values.to_vec())
}

/// Prepend the zero vector so signatures become sensitive to the start level.
pub fn basepoint_augment(p: &Path) -> Path {
    let mut data = vec![0.0; p.dim()];
    data.extend_from_slice(&p.data);
    Path { dim: p.dim(), data }
}

/// Lead-lag interleaving of a scalar path: point 2j = (x_j, x_j) and point
/// 2j+1 = (x_{j+1}, x_j), so the lead coordinate advances first. Output has
/// 2N+1 points of dimension 2.
pub fn lead_lag(p: &Path) -> Result<Path> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "lead-lag is defined for scalar paths, got dimension {}",
            p.dim()
        )));
    }
    let n = p.num_segments();
    let mut data = Vec::with_capacity(2 * (2 * n + 1));
    for j in 0..n {
        let x_j = p.point(j)[0];
        let x_next = p.point(j + 1)[0];
        data.push(x_j);
        data.push(x_j);
        data.push(x_next);
        data.push(x_j);
    }
    let x_last = p.point(n)[0];
    data.push(x_last);
    data.push(x_last);
    Ok(Path { dim: 2, data })
}

/// Append an equidistant time coordinate j/N running from 0 to 1.
pub fn time_augment(p: &Path) -> Path {
    let n = p.num_segments();
    let dim = p.dim() + 1;
    let mut data = Vec::with_capacity(dim * p.len());
    for (j, point) in p.points().enumerate() {
        data.extend_from_slice(point);
        data.push(j as f64 / n as f64);
    }
    Path { dim, data }
}

/// The full series embedding: basepoint, then lead-lag, then time. A series
/// of n values becomes a 3-dimensional path of 2n+1 points.
pub fn embed_series(values: &[f64]) -> Result<Path> {
    let base = basepoint_augment(&from_series(values)?);
    Ok(time_augment(&lead_lag(&base)?))
}
