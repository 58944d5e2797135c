use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use super::{parse_date, CountyId, CountyPanel};
use crate::error::{Error, Result};

/// Column names of the eight static county features, in design-matrix order.
pub const DEMOGRAPHIC_FEATURES: [&str; 8] = [
    "pop_density",
    "pop_estimate",
    "n_hospitals",
    "n_icu_beds",
    "median_age",
    "pct_smokers",
    "pct_diabetes",
    "heart_disease_mortality",
];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn column(headers: &csv::StringRecord, name: &str, context: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Header {
            context: context.to_string(),
            reason: format!("missing column {name:?}"),
        })
}

/// Symmetric county adjacency without self-edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: BTreeMap<CountyId, BTreeSet<CountyId>>,
}

impl AdjacencyGraph {
    /// Builds the symmetric closure of the given pairs, dropping self-edges and
    /// duplicates.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (CountyId, CountyId)>) -> Self {
        let mut graph = AdjacencyGraph::default();
        for (a, b) in pairs {
            graph.insert(a, b);
        }
        graph
    }

    fn insert(&mut self, a: CountyId, b: CountyId) {
        if a == b {
            self.neighbors.entry(a).or_default();
            return;
        }
        self.neighbors.entry(a.clone()).or_default().insert(b.clone());
        self.neighbors.entry(b).or_default().insert(a);
    }

    /// Neighbours of `county` (empty when unknown).
    pub fn neighbors<'a>(&'a self, county: &CountyId) -> impl Iterator<Item = &'a CountyId> + 'a {
        self.neighbors.get(county).into_iter().flatten()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Counties mentioned in the graph but absent from `panel`. Their edges
    /// are kept; they simply contribute nothing to neighbour aggregates.
    pub fn unknown_counties(&self, panel: &CountyPanel) -> Vec<CountyId> {
        self.neighbors
            .keys()
            .filter(|c| panel.county_index(c).is_none())
            .cloned()
            .collect()
    }
}

/// Loads a `countyFIPS,neighborFIPS` pair list.
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<AdjacencyGraph> {
    let path = path.as_ref();
    read_adjacency(open(path)?, &path.display().to_string())
}

pub fn read_adjacency<R: Read>(reader: R, context: &str) -> Result<AdjacencyGraph> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    let a_col = column(&headers, "countyFIPS", context)?;
    let b_col = column(&headers, "neighborFIPS", context)?;
    let mut graph = AdjacencyGraph::default();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(context, e))?;
        let a = CountyId::parse(record.get(a_col).unwrap_or_default());
        let b = CountyId::parse(record.get(b_col).unwrap_or_default());
        match (a, b) {
            (Ok(a), Ok(b)) => graph.insert(a, b),
            _ => log::warn!("{context}: malformed pair {record:?} skipped"),
        }
    }
    Ok(graph)
}

/// Static demographic and health-system features per county, complete for
/// every county of the panel it was loaded against.
#[derive(Clone, Debug, PartialEq)]
pub struct DemographicsTable {
    rows: BTreeMap<CountyId, [f64; 8]>,
    medians: [f64; 8],
    /// `(county, feature)` pairs filled with the column median.
    pub imputed: Vec<(CountyId, &'static str)>,
    pub warnings: Vec<String>,
}

impl DemographicsTable {
    /// Builds a table from explicit rows; `medians` fill any gaps.
    pub fn from_rows(rows: BTreeMap<CountyId, [f64; 8]>) -> Self {
        let medians = std::array::from_fn(|j| {
            median(rows.values().map(|r| r[j]).filter(|v| v.is_finite()).collect())
                .unwrap_or(0.0)
        });
        DemographicsTable {
            rows,
            medians,
            imputed: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn get(&self, county: &CountyId) -> Option<&[f64; 8]> {
        self.rows.get(county)
    }

    /// Features of `county`, falling back to the column medians.
    pub fn features_for(&self, county: &CountyId) -> [f64; 8] {
        self.rows.get(county).copied().unwrap_or(self.medians)
    }

    pub fn medians(&self) -> &[f64; 8] {
        &self.medians
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Loads the demographics CSV, restricted to the counties of `panel`.
///
/// Missing or non-finite values are replaced by the median of the column over
/// all rows of the file; panel counties without a row get the medians for all
/// eight features. Every imputation is logged.
pub fn load_demographics(path: impl AsRef<Path>, panel: &CountyPanel) -> Result<DemographicsTable> {
    let path = path.as_ref();
    read_demographics(open(path)?, &path.display().to_string(), panel)
}

pub fn read_demographics<R: Read>(
    reader: R,
    context: &str,
    panel: &CountyPanel,
) -> Result<DemographicsTable> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    let id_col = column(&headers, "countyFIPS", context)?;
    let cols: Vec<usize> = DEMOGRAPHIC_FEATURES
        .iter()
        .map(|name| column(&headers, name, context))
        .collect::<Result<_>>()?;

    let mut raw: BTreeMap<CountyId, [Option<f64>; 8]> = BTreeMap::new();
    let mut warnings = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(context, e))?;
        let Ok(county) = CountyId::parse(record.get(id_col).unwrap_or_default()) else {
            let msg = format!("malformed FIPS in row {record:?}; row rejected");
            log::warn!("{context}: {msg}");
            warnings.push(msg);
            continue;
        };
        let values = std::array::from_fn(|j| {
            record
                .get(cols[j])
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        });
        raw.entry(county).or_insert(values);
    }

    let medians: [f64; 8] = std::array::from_fn(|j| {
        median(raw.values().filter_map(|r| r[j]).collect()).unwrap_or(0.0)
    });

    let mut rows = BTreeMap::new();
    let mut imputed = Vec::new();
    for (county, values) in raw {
        if panel.county_index(&county).is_none() {
            let msg = format!("county {county} not in panel; row dropped");
            log::warn!("{context}: {msg}");
            warnings.push(msg);
            continue;
        }
        let mut row = [0.0; 8];
        for j in 0..8 {
            row[j] = values[j].unwrap_or_else(|| {
                log::warn!(
                    "{context}: county {county} missing {}; imputed median {}",
                    DEMOGRAPHIC_FEATURES[j],
                    medians[j]
                );
                imputed.push((county.clone(), DEMOGRAPHIC_FEATURES[j]));
                medians[j]
            });
        }
        rows.insert(county, row);
    }
    for county in panel.counties() {
        if !rows.contains_key(county) {
            let msg = format!("county {county} has no demographics row; all features imputed");
            log::warn!("{context}: {msg}");
            warnings.push(msg);
            imputed.extend(DEMOGRAPHIC_FEATURES.iter().map(|&f| (county.clone(), f)));
            rows.insert(county.clone(), medians);
        }
    }
    Ok(DemographicsTable {
        rows,
        medians,
        imputed,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hospital {
    pub id: String,
    pub county: CountyId,
    pub employees: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HospitalTable {
    pub hospitals: Vec<Hospital>,
    pub warnings: Vec<String>,
}

/// Loads `hospital_id,countyFIPS,employees`, keeping only hospitals located in
/// counties of `panel`.
pub fn load_hospitals(path: impl AsRef<Path>, panel: &CountyPanel) -> Result<HospitalTable> {
    let path = path.as_ref();
    read_hospitals(open(path)?, &path.display().to_string(), panel)
}

pub fn read_hospitals<R: Read>(
    reader: R,
    context: &str,
    panel: &CountyPanel,
) -> Result<HospitalTable> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    let id_col = column(&headers, "hospital_id", context)?;
    let county_col = column(&headers, "countyFIPS", context)?;
    let emp_col = column(&headers, "employees", context)?;
    let mut table = HospitalTable::default();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(context, e))?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let county = CountyId::parse(record.get(county_col).unwrap_or_default());
        let employees = record.get(emp_col).and_then(|s| {
            s.parse::<u64>()
                .ok()
                .or_else(|| s.parse::<f64>().ok().filter(|v| *v >= 0.0).map(|v| v.round() as u64))
        });
        let msg = match (county, employees) {
            (Ok(county), Some(employees)) if panel.county_index(&county).is_some() => {
                table.hospitals.push(Hospital {
                    id,
                    county,
                    employees,
                });
                continue;
            }
            (Ok(county), Some(_)) => format!("hospital {id}: county {county} not in panel; dropped"),
            _ => format!("hospital {id}: malformed row; dropped"),
        };
        log::warn!("{context}: {msg}");
        table.warnings.push(msg);
    }
    Ok(table)
}

/// Date on which social distancing was first instituted, per county.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InterventionTable {
    pub dates: BTreeMap<CountyId, NaiveDate>,
}

/// Loads `countyFIPS,intervention_date`.
pub fn load_interventions(path: impl AsRef<Path>) -> Result<InterventionTable> {
    let path = path.as_ref();
    read_interventions(open(path)?, &path.display().to_string())
}

pub fn read_interventions<R: Read>(reader: R, context: &str) -> Result<InterventionTable> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    let id_col = column(&headers, "countyFIPS", context)?;
    let date_col = column(&headers, "intervention_date", context)?;
    let mut table = InterventionTable::default();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(context, e))?;
        let county = CountyId::parse(record.get(id_col).unwrap_or_default());
        let date = record.get(date_col).and_then(parse_date);
        match (county, date) {
            (Ok(c), Some(d)) => {
                table.dates.entry(c).or_insert(d);
            }
            _ => log::warn!("{context}: malformed intervention row {record:?} skipped"),
        }
    }
    Ok(table)
}
