//! Ingestion of mortality data: whitespace-delimited life-table text files
//! (Year Age Female Male Total, "." for missing, "110+" style open ages) and
//! plain CSV matrices, shaped into a [`MortalitySurface`] with a terminal
//! open age group and natural-log rates.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::surface::{AgeGrid, MortalitySurface, Provenance, Scale, SourceFingerprint};

/// Log rates outside this band indicate a unit mistake (e.g. rates already
/// in percent) and are rejected during surface building.
pub const LOG_RATE_BAND: (f64, f64) = (-15.0, 1.0);

/// Age column of a life-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeToken {
    Years(u32),
    /// Open-ended terminal group, e.g. "110+".
    Open(u32),
}

impl AgeToken {
    pub fn value(&self) -> u32 {
        match self {
            AgeToken::Years(a) | AgeToken::Open(a) => *a,
        }
    }
}

/// One parsed life-table row. Missing cells ('.') become `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmdRecord {
    pub year: i32,
    pub age: AgeToken,
    pub female: Option<f64>,
    pub male: Option<f64>,
    pub total: Option<f64>,
}

/// Which sex series feeds the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SexColumn {
    Female,
    Male,
    #[default]
    Total,
}

impl SexColumn {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" => Ok(SexColumn::Female),
            "male" => Ok(SexColumn::Male),
            "total" => Ok(SexColumn::Total),
            other => Err(Error::Usage(format!(
                "unknown sex column '{other}' (expected female, male, or total)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SexColumn::Female => "female",
            SexColumn::Male => "male",
            SexColumn::Total => "total",
        }
    }

    fn pick(&self, r: &HmdRecord) -> Option<f64> {
        match self {
            SexColumn::Female => r.female,
            SexColumn::Male => r.male,
            SexColumn::Total => r.total,
        }
    }
}

fn parse_age_token(tok: &str) -> Option<AgeToken> {
    if let Some(stripped) = tok.strip_suffix('+') {
        stripped.parse::<u32>().ok().map(AgeToken::Open)
    } else {
        tok.parse::<u32>().ok().map(AgeToken::Years)
    }
}

fn parse_rate_cell(tok: &str) -> std::result::Result<Option<f64>, String> {
    if tok == "." {
        return Ok(None);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        Ok(v) => Err(format!("rate {v} is not a finite non-negative number")),
        Err(_) => Err(format!("'{tok}' is not a number or '.'")),
    }
}

/// Parse a life-table text: a header block terminated by the first blank
/// line, an optional "Year Age ..." column header, then whitespace-delimited
/// rows Year Age Female Male Total.
pub fn parse_hmd_table(text: &str, source: &str) -> Result<Vec<HmdRecord>> {
    let lines: Vec<&str> = text.lines().collect();
    // Header block: everything up to and including the first blank line.
    let table_start = lines
        .iter()
        .position(|l| l.trim().is_empty())
        .map(|i| i + 1)
        .unwrap_or(0);

    let mut records = Vec::new();
    for (offset, raw) in lines[table_start..].iter().enumerate() {
        let line_no = table_start + offset + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        // Column header after the blank line.
        if tokens[0].eq_ignore_ascii_case("year") {
            continue;
        }
        if tokens.len() != 5 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: line_no,
                msg: format!("expected 5 columns (Year Age Female Male Total), found {}", tokens.len()),
            });
        }
        let year: i32 = tokens[0].parse().map_err(|_| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg: format!("'{}' is not a year", tokens[0]),
        })?;
        let age = parse_age_token(tokens[1]).ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg: format!("'{}' is not an age or open age group", tokens[1]),
        })?;
        let mut cells = [None; 3];
        for (slot, tok) in cells.iter_mut().zip(&tokens[2..5]) {
            *slot = parse_rate_cell(tok).map_err(|msg| Error::Parse {
                path: source.to_string(),
                line: line_no,
                msg,
            })?;
        }
        records.push(HmdRecord {
            year,
            age,
            female: cells[0],
            male: cells[1],
            total: cells[2],
        });
    }
    if records.is_empty() {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 0,
            msg: "no data rows found".to_string(),
        });
    }
    Ok(records)
}

/// Country label from the first header line ("Japan, Death rates …").
pub fn hmd_country_label(text: &str) -> Option<String> {
    let first = text.lines().next()?.trim();
    if first.is_empty() {
        return None;
    }
    let name = first.split(',').next()?.trim();
    if name.is_empty() {
        None
    } else {
        Some(name.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub max_age: u32,
    pub start_year: Option<i32>,
    pub end_year: Option<i32>,
    pub column: SexColumn,
    pub country: Option<String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_age: 100,
            start_year: None,
            end_year: None,
            column: SexColumn::Total,
            country: None,
        }
    }
}

/// Shape parsed rate records into a log-rate surface: ages above `max_age`
/// merge into the open group (exposure-weighted when exposures are given),
/// zero or missing cells are repaired with the minimum positive rate seen for
/// that age, and everything is log-transformed and band-checked.
pub fn build_surface(
    mx_records: &[HmdRecord],
    exposure_records: Option<&[HmdRecord]>,
    opts: &BuildOptions,
) -> Result<MortalitySurface> {
    if mx_records.is_empty() {
        return Err(Error::Data("no rate records supplied".into()));
    }
    let column = opts.column;
    let start = opts
        .start_year
        .unwrap_or_else(|| mx_records.iter().map(|r| r.year).min().unwrap());
    let end = opts
        .end_year
        .unwrap_or_else(|| mx_records.iter().map(|r| r.year).max().unwrap());
    if start > end {
        return Err(Error::Usage(format!(
            "start year {start} is after end year {end}"
        )));
    }
    let n_years = (end - start + 1) as usize;
    let ages = AgeGrid::new(opts.max_age)?;
    let p = ages.len();

    // (year, age) → rate, rejecting duplicates. Exposures keyed identically.
    let mut rate_map: std::collections::BTreeMap<(i32, u32), Option<f64>> =
        std::collections::BTreeMap::new();
    for r in mx_records {
        if r.year < start || r.year > end {
            continue;
        }
        if rate_map.insert((r.year, r.age.value()), column.pick(r)).is_some() {
            return Err(Error::Data(format!(
                "duplicate record for year {} age {}",
                r.year,
                r.age.value()
            )));
        }
    }
    let mut expo_map: std::collections::BTreeMap<(i32, u32), f64> =
        std::collections::BTreeMap::new();
    if let Some(expos) = exposure_records {
        for r in expos {
            if r.year < start || r.year > end {
                continue;
            }
            if let Some(e) = column.pick(r) {
                expo_map.insert((r.year, r.age.value()), e);
            }
        }
    }

    // Assemble the year × age grid of raw rates (None = missing).
    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; p]; n_years];
    for (t, row) in grid.iter_mut().enumerate() {
        let year = start + t as i32;
        let mut any = false;
        for (i, cell) in row.iter_mut().enumerate().take(p - 1) {
            if let Some(v) = rate_map.get(&(year, i as u32)).copied().flatten() {
                *cell = Some(v);
                any = true;
            }
        }
        // Open group: pool every recorded age ≥ max_age.
        let mut weighted = 0.0;
        let mut weight = 0.0;
        let mut plain = Vec::new();
        for ((y, age), rate) in rate_map.range((year, opts.max_age)..=(year, u32::MAX)) {
            debug_assert_eq!(*y, year);
            if let Some(v) = rate {
                plain.push(*v);
                if let Some(e) = expo_map.get(&(*y, *age)) {
                    weighted += v * e;
                    weight += e;
                }
            }
        }
        let open = if weight > 0.0 {
            Some(weighted / weight)
        } else if !plain.is_empty() {
            Some(plain.iter().sum::<f64>() / plain.len() as f64)
        } else {
            None
        };
        if open.is_some() {
            any = true;
        }
        row[p - 1] = open;
        if !any {
            return Err(Error::Data(format!("year {year} is entirely missing")));
        }
    }

    // Repair zero/missing cells with the minimum positive rate for that age.
    let mut repairs = 0usize;
    let mut values = DMatrix::zeros(n_years, p);
    for i in 0..p {
        let min_positive = grid
            .iter()
            .filter_map(|row| row[i])
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min);
        for (t, row) in grid.iter().enumerate() {
            let cell = row[i];
            let rate = match cell {
                Some(v) if v > 0.0 => v,
                _ => {
                    if !min_positive.is_finite() {
                        return Err(Error::Data(format!(
                            "age {} has no positive rate in any year",
                            ages.label(i)
                        )));
                    }
                    repairs += 1;
                    min_positive
                }
            };
            let log_rate = rate.ln();
            if !(LOG_RATE_BAND.0..=LOG_RATE_BAND.1).contains(&log_rate) {
                return Err(Error::Data(format!(
                    "log rate {log_rate:.3} for year {} age {} falls outside the sanity band [{}, {}]",
                    start + t as i32,
                    ages.label(i),
                    LOG_RATE_BAND.0,
                    LOG_RATE_BAND.1
                )));
            }
            values[(t, i)] = log_rate;
        }
    }

    MortalitySurface::new(
        start,
        ages,
        values,
        Provenance {
            country: opts.country.clone(),
            sources: Vec::new(),
            repairs,
        },
    )
}

/// Parse a surface CSV: optional `#scale=log|raw` pragma (required once),
/// other `#` lines ignored, header `year,<0>,<1>,…,<N+>`, numeric rows.
/// Raw-scale values are log-transformed on ingestion.
pub fn parse_csv_matrix(text: &str, source: &str) -> Result<MortalitySurface> {
    let mut scale: Option<Scale> = None;
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut rows: Vec<(usize, i32, Vec<f64>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(value) = rest.strip_prefix("scale=") {
                scale = Some(match value.trim() {
                    "log" => Scale::Log,
                    "raw" => Scale::Raw,
                    other => {
                        return Err(Error::Parse {
                            path: source.to_string(),
                            line: line_no,
                            msg: format!("unknown scale '{other}' (expected log or raw)"),
                        })
                    }
                });
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if header.is_none() {
            if cells.is_empty() || !cells[0].eq_ignore_ascii_case("year") {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: line_no,
                    msg: "header row must start with 'year'".to_string(),
                });
            }
            if cells.len() < 2 {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: line_no,
                    msg: "header row names no age columns".to_string(),
                });
            }
            header = Some((line_no, cells[1..].iter().map(|c| c.to_string()).collect()));
            continue;
        }
        let width = header.as_ref().unwrap().1.len();
        if cells.len() != width + 1 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: line_no,
                msg: format!("expected {} cells, found {}", width + 1, cells.len()),
            });
        }
        let year: i32 = cells[0].parse().map_err(|_| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg: format!("'{}' is not a year", cells[0]),
        })?;
        let mut vals = Vec::with_capacity(width);
        for c in &cells[1..] {
            let v: f64 = c.parse().map_err(|_| Error::Parse {
                path: source.to_string(),
                line: line_no,
                msg: format!("'{c}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: line_no,
                    msg: format!("non-finite value {v}"),
                });
            }
            vals.push(v);
        }
        rows.push((line_no, year, vals));
    }

    let (header_line, labels) = header.ok_or_else(|| Error::Parse {
        path: source.to_string(),
        line: 0,
        msg: "no header row found".to_string(),
    })?;
    let scale = scale.ok_or_else(|| Error::Parse {
        path: source.to_string(),
        line: 0,
        msg: "missing '#scale=log|raw' pragma".to_string(),
    })?;
    if rows.is_empty() {
        return Err(Error::Parse {
            path: source.to_string(),
            line: header_line,
            msg: "no data rows".to_string(),
        });
    }

    // Age labels must be 0,1,…,N−1 then "N+".
    let p = labels.len();
    for (i, label) in labels.iter().enumerate() {
        let ok = if i + 1 == p {
            *label == format!("{i}+")
        } else {
            *label == i.to_string()
        };
        if !ok {
            return Err(Error::Parse {
                path: source.to_string(),
                line: header_line,
                msg: format!(
                    "age header '{label}' at position {i} (expected {})",
                    if i + 1 == p {
                        format!("'{i}+'")
                    } else {
                        format!("'{i}'")
                    }
                ),
            });
        }
    }

    rows.sort_by_key(|(_, year, _)| *year);
    for w in rows.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: w[1].0,
                msg: format!("duplicate year {}", w[0].1),
            });
        }
        if w[1].1 != w[0].1 + 1 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: w[1].0,
                msg: format!("gap between years {} and {}", w[0].1, w[1].1),
            });
        }
    }

    let first_year = rows[0].1;
    let mut values = DMatrix::zeros(rows.len(), p);
    for (t, (line_no, _, vals)) in rows.iter().enumerate() {
        for (i, v) in vals.iter().enumerate() {
            let log_rate = match scale {
                Scale::Log => *v,
                Scale::Raw => {
                    if *v <= 0.0 {
                        return Err(Error::Parse {
                            path: source.to_string(),
                            line: *line_no,
                            msg: format!("raw rate {v} must be positive to log-transform"),
                        });
                    }
                    v.ln()
                }
            };
            values[(t, i)] = log_rate;
        }
    }

    MortalitySurface::new(
        first_year,
        AgeGrid::new((p - 1) as u32)?,
        values,
        Provenance {
            country: None,
            sources: Vec::new(),
            repairs: 0,
        },
    )
}

/// Serialize a surface as CSV with the scale pragma; `extra_header` lines are
/// emitted first as comments. Values print in shortest round-trip form, so
/// parsing the output reproduces the surface bit-exactly.
pub fn write_surface_csv(surface: &MortalitySurface, extra_header: &[String]) -> String {
    let mut out = String::new();
    for line in extra_header {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("#scale=log\n");
    out.push_str("year");
    for label in surface.ages().labels() {
        out.push(',');
        out.push_str(&label);
    }
    out.push('\n');
    for (t, year) in surface.years().iter().enumerate() {
        out.push_str(&year.to_string());
        for i in 0..surface.n_ages() {
            out.push(',');
            out.push_str(&surface.values()[(t, i)].to_string());
        }
        out.push('\n');
    }
    out
}

/// Align exposure records onto a surface's year × age grid: direct lookup for
/// closed ages, summed exposure for the open group, zero where unrecorded.
pub fn redistribute_exposures(
    records: &[HmdRecord],
    surface: &MortalitySurface,
    column: SexColumn,
) -> Result<DMatrix<f64>> {
    let p = surface.n_ages();
    let open_age = surface.ages().open_age();
    let mut out = DMatrix::zeros(surface.n_years(), p);
    for r in records {
        let Some(t) = surface.year_index(r.year) else {
            continue;
        };
        let Some(e) = column.pick(r) else { continue };
        let age = r.age.value();
        let col = if age >= open_age {
            open_age as usize
        } else {
            age as usize
        };
        out[(t, col)] += e;
    }
    Ok(out)
}

/// Read a file and fingerprint its bytes (first 16 hex chars of SHA-256).
pub fn read_with_fingerprint(path: &Path) -> Result<(String, SourceFingerprint)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let sha256_16: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Data(format!("{} is not valid UTF-8", path.display())))?;
    Ok((
        text,
        SourceFingerprint {
            path: path.display().to_string(),
            sha256_16,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "Testland, Death rates (period 1x1)\n\n  Year          Age             Female            Male           Total\n  1947           0             0.111188        0.131293        0.121465\n  1947           1             0.011000        0.012000        0.011500\n  1947          110+           0.500000        0.500000        0.500000\n  1948           0             0.100000        0.120000        0.110000\n  1948           1             .               0.011000        0.010500\n  1948          110+           0.480000        0.520000        0.500000\n";

    #[test]
    fn parses_rows_missing_and_open_age() {
        let records = parse_hmd_table(SAMPLE, "sample").unwrap();
        assert_eq!(records.len(), 6);
        assert_eq!(records[0].year, 1947);
        assert_eq!(records[0].age, AgeToken::Years(0));
        assert!((records[0].total.unwrap() - 0.121465).abs() < 1e-12);
        assert_eq!(records[4].female, None);
        assert!(records[4].total.is_some());
        assert_eq!(records[2].age, AgeToken::Open(110));
        assert_eq!(hmd_country_label(SAMPLE).as_deref(), Some("Testland"));
    }

    #[test]
    fn malformed_rows_are_reported_with_line_numbers() {
        let bad = "Header\n\nYear Age Female Male Total\n1950 0 0.1 0.1\n";
        match parse_hmd_table(bad, "bad") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_hmd_table("", "empty").is_err());
        let nan = "H\n\n1950 0 NaN 0.1 0.1\n";
        assert!(parse_hmd_table(nan, "nan").is_err());
    }

    #[test]
    fn build_merges_open_group_with_exposures() {
        // Two ages above max_age=1: rates 0.5 (E=10) and 1.0 (E=30) → 0.875.
        let mx = vec![
            HmdRecord { year: 2000, age: AgeToken::Years(0), female: None, male: None, total: Some(0.01) },
            HmdRecord { year: 2000, age: AgeToken::Years(1), female: None, male: None, total: Some(0.5) },
            HmdRecord { year: 2000, age: AgeToken::Years(2), female: None, male: None, total: Some(1.0) },
            HmdRecord { year: 2001, age: AgeToken::Years(0), female: None, male: None, total: Some(0.01) },
            HmdRecord { year: 2001, age: AgeToken::Years(1), female: None, male: None, total: Some(0.5) },
            HmdRecord { year: 2001, age: AgeToken::Years(2), female: None, male: None, total: Some(1.0) },
        ];
        let expo = vec![
            HmdRecord { year: 2000, age: AgeToken::Years(1), female: None, male: None, total: Some(10.0) },
            HmdRecord { year: 2000, age: AgeToken::Years(2), female: None, male: None, total: Some(30.0) },
            HmdRecord { year: 2001, age: AgeToken::Years(1), female: None, male: None, total: Some(10.0) },
            HmdRecord { year: 2001, age: AgeToken::Years(2), female: None, male: None, total: Some(30.0) },
        ];
        let opts = BuildOptions { max_age: 1, ..BuildOptions::default() };
        let s = build_surface(&mx, Some(&expo), &opts).unwrap();
        assert_eq!(s.n_ages(), 2);
        assert!((s.values()[(0, 1)] - 0.875f64.ln()).abs() < 1e-12);

        // Without exposures: unweighted mean (0.75).
        let s2 = build_surface(&mx, None, &opts).unwrap();
        assert!((s2.values()[(0, 1)] - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn repair_replaces_zero_and_missing() {
        let mut mx = Vec::new();
        for year in 2000..2003 {
            for age in 0..=2u32 {
                let rate = match (year, age) {
                    (2001, 1) => Some(0.0), // zero to repair
                    (2002, 1) => None,      // missing to repair
                    _ => Some(0.02 + age as f64 * 0.01),
                };
                mx.push(HmdRecord {
                    year,
                    age: AgeToken::Years(age),
                    female: None,
                    male: None,
                    total: rate,
                });
            }
        }
        let opts = BuildOptions { max_age: 2, ..BuildOptions::default() };
        let s = build_surface(&mx, None, &opts).unwrap();
        assert_eq!(s.provenance.repairs, 2);
        // Both repaired cells hold the age's minimum positive rate (0.03).
        assert!((s.values()[(1, 1)] - 0.03f64.ln()).abs() < 1e-12);
        assert!((s.values()[(2, 1)] - 0.03f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn age_grid_shape_for_max_age_100() {
        let mut mx = Vec::new();
        for year in 2000..2002 {
            for age in 0..=105u32 {
                mx.push(HmdRecord {
                    year,
                    age: if age == 105 { AgeToken::Open(105) } else { AgeToken::Years(age) },
                    female: None,
                    male: None,
                    total: Some(0.001 * (age as f64 + 1.0)),
                });
            }
        }
        let s = build_surface(&mx, None, &BuildOptions::default()).unwrap();
        assert_eq!(s.n_ages(), 101);
        let labels = s.ages().labels();
        assert_eq!(labels[0], "0");
        assert_eq!(labels[99], "99");
        assert_eq!(labels[100], "100+");
    }

    #[test]
    fn entirely_missing_year_or_age_fails() {
        let mx = vec![
            HmdRecord { year: 2000, age: AgeToken::Years(0), female: None, male: None, total: Some(0.01) },
            HmdRecord { year: 2000, age: AgeToken::Years(1), female: None, male: None, total: Some(0.02) },
            HmdRecord { year: 2001, age: AgeToken::Years(0), female: None, male: None, total: None },
            HmdRecord { year: 2001, age: AgeToken::Years(1), female: None, male: None, total: None },
        ];
        let opts = BuildOptions { max_age: 1, ..BuildOptions::default() };
        assert!(build_surface(&mx, None, &opts).is_err());

        let mx_age_dead = vec![
            HmdRecord { year: 2000, age: AgeToken::Years(0), female: None, male: None, total: Some(0.01) },
            HmdRecord { year: 2000, age: AgeToken::Years(1), female: None, male: None, total: Some(0.0) },
            HmdRecord { year: 2001, age: AgeToken::Years(0), female: None, male: None, total: Some(0.01) },
            HmdRecord { year: 2001, age: AgeToken::Years(1), female: None, male: None, total: Some(0.0) },
        ];
        assert!(build_surface(&mx_age_dead, None, &opts).is_err());
    }

    #[test]
    fn sanity_band_catches_unit_mistakes() {
        let mx = vec![
            HmdRecord { year: 2000, age: AgeToken::Years(0), female: None, male: None, total: Some(12.0) },
            HmdRecord { year: 2000, age: AgeToken::Years(1), female: None, male: None, total: Some(11.0) },
            HmdRecord { year: 2001, age: AgeToken::Years(0), female: None, male: None, total: Some(12.0) },
            HmdRecord { year: 2001, age: AgeToken::Years(1), female: None, male: None, total: Some(11.0) },
        ];
        let opts = BuildOptions { max_age: 1, ..BuildOptions::default() };
        assert!(build_surface(&mx, None, &opts).is_err());
    }

    #[test]
    fn shuffled_rows_build_identical_surfaces() {
        let mut mx = Vec::new();
        for year in 2000..2005 {
            for age in 0..=3u32 {
                mx.push(HmdRecord {
                    year,
                    age: AgeToken::Years(age),
                    female: None,
                    male: None,
                    total: Some(0.01 + age as f64 * 0.005 + (year - 2000) as f64 * 0.001),
                });
            }
        }
        let opts = BuildOptions { max_age: 3, ..BuildOptions::default() };
        let a = build_surface(&mx, None, &opts).unwrap();
        let mut shuffled = mx.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        shuffled.swap(0, 17);
        let b = build_surface(&shuffled, None, &opts).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let values = DMatrix::from_row_slice(2, 3, &[
            -1.234567890123,
            -2.0,
            -0.3333333333333333,
            -1.1,
            -2.2,
            -3.3,
        ]);
        let s = MortalitySurface::new(1999, AgeGrid::new(2).unwrap(), values, Provenance::default())
            .unwrap();
        let text = write_surface_csv(&s, &["note".to_string()]);
        let back = parse_csv_matrix(&text, "roundtrip").unwrap();
        assert_eq!(s.values(), back.values());
        assert_eq!(s.years(), back.years());
    }

    #[test]
    fn csv_parse_validations() {
        let ok = "#scale=log\nyear,0,1,2+\n2000,-1,-2,-3\n2001,-1,-2,-3\n";
        assert!(parse_csv_matrix(ok, "t").is_ok());

        let dup = "#scale=log\nyear,0,1+\n2000,-1,-2\n2000,-1,-2\n";
        match parse_csv_matrix(dup, "t") {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("2000")),
            other => panic!("expected duplicate year error, got {other:?}"),
        }

        let ragged = "#scale=log\nyear,0,1+\n2000,-1\n";
        assert!(parse_csv_matrix(ragged, "t").is_err());

        let no_pragma = "year,0,1+\n2000,-1,-2\n";
        assert!(parse_csv_matrix(no_pragma, "t").is_err());

        let raw = "#scale=raw\nyear,0,1+\n2000,0.5,0.25\n2001,0.5,0.25\n";
        let s = parse_csv_matrix(raw, "t").unwrap();
        assert!((s.values()[(0, 0)] - 0.5f64.ln()).abs() < 1e-15);

        let raw_zero = "#scale=raw\nyear,0,1+\n2000,0.0,0.25\n";
        assert!(parse_csv_matrix(raw_zero, "t").is_err());

        let log_passthrough = "#scale=log\nyear,0,1+\n2000,-1.5,-2.5\n";
        let s = parse_csv_matrix(log_passthrough, "t").unwrap();
        assert_eq!(s.values()[(0, 0)], -1.5);

        let gap = "#scale=log\nyear,0,1+\n2000,-1,-2\n2002,-1,-2\n";
        assert!(parse_csv_matrix(gap, "t").is_err());

        let bad_labels = "#scale=log\nyear,0,5+\n2000,-1,-2\n";
        assert!(parse_csv_matrix(bad_labels, "t").is_err());
    }
}
