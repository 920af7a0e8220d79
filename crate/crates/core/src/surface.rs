//! The year-by-age grid of log mortality rates shared by every pipeline stage.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Whether surface values are natural-log rates or raw rates.
///
/// Every constructor in this crate that ingests raw rates log-transforms them,
/// so downstream stages only ever see `Log` surfaces; the tag is kept so file
/// round-trips preserve the declared scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Log,
    Raw,
}

impl Scale {
    pub fn label(self) -> &'static str {
        match self {
            Scale::Log => "log",
            Scale::Raw => "raw",
        }
    }
}

/// Contiguous single-year ages `0, 1, …` ending in one open group.
///
/// `open_age = 100` means labels `0..=99` plus the terminal group `100+`,
/// i.e. `open_age + 1` columns. The open group is placed at the numeric
/// value `open_age` on the age grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeGrid {
    open_age: u32,
}

impl AgeGrid {
    pub fn new(open_age: u32) -> Result<Self> {
        if open_age == 0 {
            return Err(Error::RejectedInput(
                "age grid needs at least one closed age before the open group".into(),
            ));
        }
        Ok(AgeGrid { open_age })
    }

    pub fn open_age(&self) -> u32 {
        self.open_age
    }

    /// Number of age columns, open group included.
    pub fn len(&self) -> usize {
        self.open_age as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, index: usize) -> String {
        if index == self.open_age as usize {
            format!("{}+", self.open_age)
        } else {
            index.to_string()
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Numeric positions used for smoothing and basis interpolation.
    pub fn grid_values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64).collect()
    }
}

/// Provenance of one ingested file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFingerprint {
    pub path: String,
    /// First 16 hex characters of the SHA-256 of the file bytes.
    pub sha256_16: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub country: Option<String>,
    pub sources: Vec<SourceFingerprint>,
    /// Number of zero/missing cells replaced during ingestion.
    pub repairs: usize,
}

/// A year × age matrix of log mortality rates with its grid metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalitySurface {
    years: Vec<i32>,
    ages: AgeGrid,
    /// Row t = year `years[t]`, column i = age i; natural-log rates.
    values: DMatrix<f64>,
    scale: Scale,
    pub provenance: Provenance,
}

impl MortalitySurface {
    /// Build a surface from already-log values, validating the grid contract:
    /// contiguous years, finite entries, matching shape.
    pub fn new(
        first_year: i32,
        ages: AgeGrid,
        values: DMatrix<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.nrows() < 1 {
            return Err(Error::RejectedInput("surface needs at least one year".into()));
        }
        if values.ncols() != ages.len() {
            return Err(Error::DimensionMismatch(format!(
                "surface has {} age columns but the age grid has {}",
                values.ncols(),
                ages.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::RejectedInput(format!(
                "surface contains a non-finite value {bad}"
            )));
        }
        let years: Vec<i32> = (0..values.nrows() as i32).map(|k| first_year + k).collect();
        Ok(MortalitySurface {
            years,
            ages,
            values,
            scale: Scale::Log,
            provenance,
        })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("surface has at least one year")
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn ages(&self) -> &AgeGrid {
        &self.ages
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Replace the value matrix, keeping grid and provenance.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.first_year(), self.ages, values, self.provenance.clone())
    }

    pub fn row_for_year(&self, year: i32) -> Option<Vec<f64>> {
        let idx = self.year_index(year)?;
        Some(self.values.row(idx).iter().copied().collect())
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        if year < self.first_year() || year > self.last_year() {
            return None;
        }
        Some((year - self.first_year()) as usize)
    }

    /// Sub-surface containing years `..=last` (used by expanding windows).
    pub fn up_to_year(&self, last: i32) -> Result<Self> {
        let idx = self.year_index(last).ok_or_else(|| {
            Error::Data(format!(
                "year {last} outside surface range {}..={}",
                self.first_year(),
                self.last_year()
            ))
        })?;
        let values = self.values.rows(0, idx + 1).into_owned();
        Self::new(self.first_year(), self.ages, values, self.provenance.clone())
    }

    /// Time series of one age column, years in order.
    pub fn age_series(&self, age_index: usize) -> Vec<f64> {
        self.values.column(age_index).iter().copied().collect()
    }

    /// Stable content hash covering grid, values, and scale; used in output
    /// headers so runs record exactly what they consumed.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.first_year().to_le_bytes());
        hasher.update((self.ages.open_age()).to_le_bytes());
        hasher.update([match self.scale {
            Scale::Log => 0u8,
            Scale::Raw => 1u8,
        }]);
        for v in self.values.iter() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_surface() -> MortalitySurface {
        let values = DMatrix::from_row_slice(3, 4, &[
            -1.0, -2.0, -3.0, -4.0, //
            -1.1, -2.1, -3.1, -4.1, //
            -1.2, -2.2, -3.2, -4.2,
        ]);
        MortalitySurface::new(2000, AgeGrid::new(3).unwrap(), values, Provenance::default())
            .unwrap()
    }

    #[test]
    fn age_labels_end_with_open_group() {
        let ages = AgeGrid::new(100).unwrap();
        assert_eq!(ages.len(), 101);
        assert_eq!(ages.label(0), "0");
        assert_eq!(ages.label(99), "99");
        assert_eq!(ages.label(100), "100+");
    }

    #[test]
    fn years_are_contiguous() {
        let s = toy_surface();
        assert_eq!(s.years(), &[2000, 2001, 2002]);
        assert_eq!(s.year_index(2001), Some(1));
        assert_eq!(s.year_index(1999), None);
    }

    #[test]
    fn up_to_year_slices_rows() {
        let s = toy_surface();
        let head = s.up_to_year(2001).unwrap();
        assert_eq!(head.n_years(), 2);
        assert_eq!(head.last_year(), 2001);
        assert_eq!(head.values().row(1), s.values().row(1));
    }

    #[test]
    fn non_finite_rejected() {
        let values = DMatrix::from_row_slice(1, 2, &[0.0, f64::NAN]);
        let err = MortalitySurface::new(2000, AgeGrid::new(1).unwrap(), values, Provenance::default());
        assert!(err.is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = toy_surface();
        let mut values = a.values().clone();
        values[(0, 0)] += 1e-9;
        let b = a.with_values(values).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), toy_surface().fingerprint());
    }
}
