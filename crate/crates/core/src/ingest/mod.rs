//! Loading and aligning the county-level input tables.
//!
//! All loaders normalise county identifiers to five-digit FIPS strings and
//! keep calendar dates only at the I/O boundary: inside the engine a day is a
//! [`Day`] offset from the first date of the panel.

mod series;
mod tables;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use series::{load_county_series, read_county_series, CleanPolicy, CountySeries};
pub use tables::{
    load_adjacency, load_demographics, load_hospitals, load_interventions, read_adjacency,
    read_demographics, read_hospitals, read_interventions, AdjacencyGraph, DemographicsTable,
    Hospital, HospitalTable, InterventionTable, DEMOGRAPHIC_FEATURES,
};

/// Day offset from the first date of a panel.
pub type Day = usize;

/// Default eligibility threshold for the evaluation set: 10 cumulative deaths.
pub const DEFAULT_ELIGIBILITY_THRESHOLD: u64 = 10;

/// Five-digit county FIPS code.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountyId(String);

impl CountyId {
    /// Parses a FIPS code, left-padding numeric codes shorter than five digits
    /// (`1001` becomes `01001`). The all-zero code used for state-level
    /// "unallocated" rows is rejected.
    pub fn parse(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        let digits = trimmed.strip_suffix(".0").unwrap_or(trimmed);
        if digits.is_empty() || digits.len() > 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::MalformedFips(raw.to_string()));
        }
        if digits.bytes().all(|b| b == b'0') {
            return Err(Error::MalformedFips(raw.to_string()));
        }
        Ok(CountyId(format!("{digits:0>5}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CountyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CountyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CountyId::parse(s)
    }
}

impl TryFrom<String> for CountyId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        CountyId::parse(&s)
    }
}

impl From<CountyId> for String {
    fn from(id: CountyId) -> String {
        id.0
    }
}

/// Parses the date formats seen in county time-series headers: ISO-8601
/// (`2020-03-01`) and US short form (`3/1/20`, `3/1/2020`).
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if s.contains('-') {
        return NaiveDate::parse_from_str(s, "%Y-%m-%d").ok();
    }
    // chrono's `%Y` happily reads "20" as year 20, so dispatch on the width
    let year = s.rsplit('/').next()?;
    match year.len() {
        4 => NaiveDate::parse_from_str(s, "%m/%d/%Y").ok(),
        2 => NaiveDate::parse_from_str(s, "%m/%d/%y").ok(),
        _ => None,
    }
}

/// Per-county cumulative death and case counts on a contiguous daily grid,
/// plus the neighbouring-county aggregates used by the expanded predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct CountyPanel {
    start: NaiveDate,
    n_days: usize,
    counties: Vec<CountyId>,
    index: HashMap<CountyId, usize>,
    deaths: Vec<Vec<u64>>,
    cases: Vec<Vec<u64>>,
    neigh_deaths: Vec<Vec<u64>>,
    neigh_cases: Vec<Vec<u64>>,
    has_cases: bool,
    has_neighbors: bool,
}

impl CountyPanel {
    /// Builds a panel from aligned series. `cases` may be `None` when only
    /// death counts are available; case-based features are then all zero.
    pub fn new(
        start: NaiveDate,
        counties: Vec<CountyId>,
        deaths: Vec<Vec<u64>>,
        cases: Option<Vec<Vec<u64>>>,
    ) -> Result<Self> {
        let n_days = deaths.first().map_or(0, Vec::len);
        if counties.len() != deaths.len() {
            return Err(Error::Dimension(format!(
                "{} counties but {} death series",
                counties.len(),
                deaths.len()
            )));
        }
        if deaths.iter().any(|d| d.len() != n_days) {
            return Err(Error::Dimension("death series of unequal length".into()));
        }
        let has_cases = cases.is_some();
        let cases = match cases {
            Some(c) => {
                if c.len() != counties.len() || c.iter().any(|s| s.len() != n_days) {
                    return Err(Error::Dimension(
                        "case series do not match death series".into(),
                    ));
                }
                c
            }
            None => vec![vec![0; n_days]; counties.len()],
        };
        let mut index = HashMap::with_capacity(counties.len());
        for (i, c) in counties.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::Dimension(format!("duplicate county {c}")));
            }
        }
        let zeros = vec![vec![0; n_days]; counties.len()];
        Ok(CountyPanel {
            start,
            n_days,
            counties,
            index,
            deaths,
            cases,
            neigh_deaths: zeros.clone(),
            neigh_cases: zeros,
            has_cases,
            has_neighbors: false,
        })
    }

    /// Aligns a death series and an optional case series on their common
    /// counties and dates. Counties present in only one file are dropped with a
    /// warning; the returned strings describe every such drop.
    pub fn from_series(
        deaths: CountySeries,
        cases: Option<CountySeries>,
    ) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        let Some(cases) = cases else {
            let panel = CountyPanel::new(deaths.start, deaths.counties, deaths.values, None)?;
            return Ok((panel, warnings));
        };

        let d_end = deaths.start + Duration::days(deaths.n_days() as i64 - 1);
        let c_end = cases.start + Duration::days(cases.n_days() as i64 - 1);
        let start = deaths.start.max(cases.start);
        let end = d_end.min(c_end);
        if end < start {
            return Err(Error::DisjointDates);
        }
        if deaths.start != cases.start || d_end != c_end {
            let msg = format!(
                "death and case files cover different dates; using common range {start}..={end}"
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let n_days = (end - start).num_days() as usize + 1;
        let d_off = (start - deaths.start).num_days() as usize;
        let c_off = (start - cases.start).num_days() as usize;

        let case_index: HashMap<&CountyId, usize> = cases
            .counties
            .iter()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        let death_ids: std::collections::HashSet<&CountyId> = deaths.counties.iter().collect();

        let mut rows: Vec<(CountyId, Vec<u64>, Vec<u64>)> = Vec::new();
        for (i, county) in deaths.counties.iter().enumerate() {
            match case_index.get(county) {
                Some(&j) => rows.push((
                    county.clone(),
                    deaths.values[i][d_off..d_off + n_days].to_vec(),
                    cases.values[j][c_off..c_off + n_days].to_vec(),
                )),
                None => {
                    let msg = format!("county {county} has deaths but no cases; dropped");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        for county in &cases.counties {
            if !death_ids.contains(county) {
                let msg = format!("county {county} has cases but no deaths; dropped");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut counties = Vec::with_capacity(rows.len());
        let mut d = Vec::with_capacity(rows.len());
        let mut c = Vec::with_capacity(rows.len());
        for (id, dv, cv) in rows {
            counties.push(id);
            d.push(dv);
            c.push(cv);
        }
        let panel = CountyPanel::new(start, counties, d, Some(c))?;
        Ok((panel, warnings))
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn n_counties(&self) -> usize {
        self.counties.len()
    }

    /// Last day offset with data. Panics on an empty panel.
    pub fn last_day(&self) -> Day {
        self.n_days.checked_sub(1).expect("panel has no days")
    }

    pub fn counties(&self) -> &[CountyId] {
        &self.counties
    }

    pub fn county(&self, idx: usize) -> &CountyId {
        &self.counties[idx]
    }

    pub fn county_index(&self, id: &CountyId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.start + Duration::days(day as i64)
    }

    /// Day offset of a calendar date, if inside the panel.
    pub fn day_of(&self, date: NaiveDate) -> Option<Day> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.n_days).then_some(off as usize)
    }

    pub fn deaths(&self, county: usize) -> &[u64] {
        &self.deaths[county]
    }

    pub fn cases(&self, county: usize) -> &[u64] {
        &self.cases[county]
    }

    pub fn neigh_deaths(&self, county: usize) -> &[u64] {
        &self.neigh_deaths[county]
    }

    pub fn neigh_cases(&self, county: usize) -> &[u64] {
        &self.neigh_cases[county]
    }

    pub fn has_cases(&self) -> bool {
        self.has_cases
    }

    pub fn has_neighbors(&self) -> bool {
        self.has_neighbors
    }

    /// Copy of the panel restricted to days `0..=last`.
    pub fn truncated(&self, last: Day) -> Result<CountyPanel> {
        self.slice_days(0, last)
    }

    /// Copy of the panel restricted to days `first..=last`; the new panel
    /// starts at `first`.
    pub fn slice_days(&self, first: Day, last: Day) -> Result<CountyPanel> {
        if last >= self.n_days || first > last {
            return Err(Error::DayOutOfRange {
                day: last,
                n_days: self.n_days,
            });
        }
        let cut = |v: &Vec<Vec<u64>>| -> Vec<Vec<u64>> {
            v.iter().map(|s| s[first..=last].to_vec()).collect()
        };
        Ok(CountyPanel {
            start: self.date_of(first),
            n_days: last - first + 1,
            counties: self.counties.clone(),
            index: self.index.clone(),
            deaths: cut(&self.deaths),
            cases: cut(&self.cases),
            neigh_deaths: cut(&self.neigh_deaths),
            neigh_cases: cut(&self.neigh_cases),
            has_cases: self.has_cases,
            has_neighbors: self.has_neighbors,
        })
    }

    /// First day on which `county` had at least `n` cumulative deaths.
    pub fn first_day_with_deaths(&self, county: usize, n: u64) -> Option<Day> {
        self.deaths[county].iter().position(|&d| d >= n)
    }
}

/// Fills the neighbouring-county death and case sums of every county.
/// Neighbours missing from the panel contribute nothing; isolated counties get
/// all-zero aggregates.
pub fn neighbor_aggregates(mut panel: CountyPanel, graph: &AdjacencyGraph) -> CountyPanel {
    let n_days = panel.n_days;
    for c in 0..panel.counties.len() {
        let mut nd = vec![0u64; n_days];
        let mut nc = vec![0u64; n_days];
        for neighbor in graph.neighbors(&panel.counties[c]) {
            let Some(&j) = panel.index.get(neighbor) else {
                continue;
            };
            for t in 0..n_days {
                nd[t] += panel.deaths[j][t];
                nc[t] += panel.cases[j][t];
            }
        }
        panel.neigh_deaths[c] = nd;
        panel.neigh_cases[c] = nc;
    }
    panel.has_neighbors = true;
    panel
}

/// Indices of the counties with at least `threshold` cumulative deaths by the
/// end of day `t`, in panel order.
pub fn eligible_counties(panel: &CountyPanel, t: Day, threshold: u64) -> Result<Vec<usize>> {
    if t >= panel.n_days {
        return Err(Error::DayOutOfRange {
            day: t,
            n_days: panel.n_days,
        });
    }
    Ok((0..panel.n_counties())
        .filter(|&c| panel.deaths[c][t] >= threshold)
        .collect())
}
