use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};

use super::{parse_date, CountyId};
use crate::error::{Error, Result};

/// How non-monotone cumulative series are treated at ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CleanPolicy {
    /// Replace every value by the running maximum of the series so far.
    #[default]
    RunningMax,
    /// Keep the values as recorded.
    Raw,
}

impl CleanPolicy {
    /// Applies the policy in place. Running-max cleaning is idempotent.
    pub fn apply(self, series: &mut [u64]) {
        if self == CleanPolicy::RunningMax {
            let mut running = 0;
            for v in series.iter_mut() {
                running = running.max(*v);
                *v = running;
            }
        }
    }
}

/// A wide county time-series table: one row per county, one column per day.
#[derive(Clone, Debug, PartialEq)]
pub struct CountySeries {
    pub start: NaiveDate,
    pub counties: Vec<CountyId>,
    pub names: Vec<String>,
    pub values: Vec<Vec<u64>>,
    /// Rows rejected or amended while loading.
    pub warnings: Vec<String>,
}

impl CountySeries {
    pub fn n_days(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Loads a `countyFIPS,CountyName,State,<date>,<date>,...` file.
pub fn load_county_series(path: impl AsRef<Path>, clean: CleanPolicy) -> Result<CountySeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_county_series(file, &path.display().to_string(), clean)
}

/// Parses a county series from any reader; `context` names the source in
/// error messages.
pub fn read_county_series<R: Read>(
    reader: R,
    context: &str,
    clean: CleanPolicy,
) -> Result<CountySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::csv(context, e))?
        .clone();

    let header_err = |reason: String| Error::Header {
        context: context.to_string(),
        reason,
    };
    let first = headers.get(0).unwrap_or_default().trim().trim_start_matches('\u{feff}');
    if !first.to_ascii_lowercase().contains("fips") {
        return Err(header_err(format!(
            "first column must be the county FIPS code, found {first:?}"
        )));
    }
    let name_col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("countyname") || h.trim().eq_ignore_ascii_case("county name"));

    let date_cols: Vec<(usize, NaiveDate)> = headers
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(i, h)| parse_date(h).map(|d| (i, d)))
        .collect();
    let Some(&(first_date_col, start)) = date_cols.first() else {
        return Err(header_err("no date columns".into()));
    };
    if date_cols.len() != headers.len() - first_date_col {
        return Err(header_err(
            "date columns must form the trailing block of the header".into(),
        ));
    }
    for pair in date_cols.windows(2) {
        let (prev, next) = (pair[0].1, pair[1].1);
        if next != prev + Duration::days(1) {
            return Err(Error::NonContiguousDates {
                context: context.to_string(),
                prev,
                next,
            });
        }
    }
    let n_days = date_cols.len();

    let mut counties = Vec::new();
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    let mut warn = |msg: String| {
        log::warn!("{context}: {msg}");
        warnings.push(msg);
    };

    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(context, e))?;
        let row_no = line + 2;
        let raw_id = record.get(0).unwrap_or_default();
        let county = match CountyId::parse(raw_id) {
            Ok(id) => id,
            Err(_) => {
                warn(format!("row {row_no}: malformed FIPS {raw_id:?}; row rejected"));
                continue;
            }
        };
        if record.len() != headers.len() {
            warn(format!(
                "row {row_no} ({county}): expected {} fields, found {}; row rejected",
                headers.len(),
                record.len()
            ));
            continue;
        }
        let parsed: Option<Vec<u64>> = (first_date_col..headers.len())
            .map(|i| parse_count(record.get(i).unwrap_or_default()))
            .collect();
        let Some(mut series) = parsed else {
            warn(format!("row {row_no} ({county}): unparseable count; row rejected"));
            continue;
        };
        if !seen.insert(county.clone()) {
            warn(format!("row {row_no}: duplicate county {county}; keeping the first row"));
            continue;
        }
        if series.windows(2).any(|w| w[1] < w[0]) {
            let action = match clean {
                CleanPolicy::RunningMax => "clamped to running maximum",
                CleanPolicy::Raw => "kept raw",
            };
            warn(format!("county {county}: non-monotone cumulative series, {action}"));
        }
        clean.apply(&mut series);
        debug_assert_eq!(series.len(), n_days);
        names.push(
            name_col
                .and_then(|i| record.get(i))
                .unwrap_or_default()
                .trim()
                .to_string(),
        );
        counties.push(county);
        values.push(series);
    }

    if counties.is_empty() {
        return Err(Error::EmptyInput(context.to_string()));
    }
    Ok(CountySeries {
        start,
        counties,
        names,
        values,
        warnings,
    })
}

fn parse_count(raw: &str) -> Option<u64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    // Some exports write integral counts as floats ("12.0").
    let f: f64 = s.parse().ok()?;
    (f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64).then_some(f as u64)
}
