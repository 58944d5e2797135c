//! Hospital-level severity index from county death counts and forecasts.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::report::schema_writer;
use crate::ingest::{CountyId, CountyPanel, HospitalTable};
use crate::predictors::ForecastSet;
use crate::scalar::Scalar;

pub const SEVERITY_SCHEMA: &str = "clep-severity/1";

/// Horizon of the predicted new deaths used by the index.
pub const NEW_DEATHS_HORIZON: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Low,
    Medium,
    High,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Low => "low",
            Category::Medium => "medium",
            Category::High => "high",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeverityRecord {
    pub hospital_id: String,
    pub county: CountyId,
    pub alloc_total: f64,
    pub alloc_new7: f64,
    pub pct_total: f64,
    pub pct_new: f64,
    pub score: f64,
    pub category: Category,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SeverityIndex {
    pub records: Vec<SeverityRecord>,
    /// Set when fewer than three hospitals are ranked or all scores tie.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Splits `value` across hospitals in proportion to `employees`; equal shares
/// when every count is zero.
pub fn allocate(value: f64, employees: &[u64]) -> Vec<f64> {
    let n = employees.len();
    if n == 0 {
        return Vec::new();
    }
    let total: u64 = employees.iter().sum();
    if total == 0 {
        return vec![value / n as f64; n];
    }
    employees
        .iter()
        .map(|&e| value * (e as f64 / total as f64))
        .collect()
}

/// Relative gap below which two allocated values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Percentage of the other values that are strictly smaller. Ties (up to
/// [`TIE_TOLERANCE`]) share a percentile; the maximum of distinct values gets 100.
pub fn percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|v| {
            let cut = v - TIE_TOLERANCE * v.abs();
            let below = sorted.partition_point(|x| *x < cut);
            100.0 * below as f64 / (n - 1) as f64
        })
        .collect()
}

/// Tercile of each score by the fraction of scores strictly below it.
pub fn categorize(scores: &[f64]) -> Vec<Category> {
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    scores
        .iter()
        .map(|s| {
            let below = sorted.partition_point(|x| x.total_cmp(s).is_lt());
            match 3 * below / n.max(1) {
                0 => Category::Low,
                1 => Category::Medium,
                _ => Category::High,
            }
        })
        .collect()
}

/// Builds the index. `totals` and `new7` map a county to its current
/// cumulative deaths and its predicted deaths over the next seven days.
/// Counties absent from either map are skipped with a warning.
pub fn severity_index(
    hospitals: &HospitalTable,
    totals: &BTreeMap<CountyId, f64>,
    new7: &BTreeMap<CountyId, f64>,
) -> Result<SeverityIndex> {
    let mut by_county: BTreeMap<&CountyId, Vec<usize>> = BTreeMap::new();
    for (i, h) in hospitals.hospitals.iter().enumerate() {
        by_county.entry(&h.county).or_default().push(i);
    }
    let mut warnings = Vec::new();
    for c in totals.keys().filter(|c| !by_county.contains_key(c)) {
        if totals[c] > 0.0 {
            warnings.push(format!("county {c} has deaths but no hospitals; skipped"));
        }
    }
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for (county, idx) in &by_county {
        let (Some(&total), Some(&new)) = (totals.get(*county), new7.get(*county)) else {
            warnings.push(format!("county {county} has hospitals but no forecast; skipped"));
            continue;
        };
        if !total.is_finite() || !new.is_finite() {
            return Err(Error::InvalidResponse(format!("non-finite death value for county {county}")));
        }
        let emp: Vec<u64> = idx.iter().map(|&i| hospitals.hospitals[i].employees).collect();
        for ((&i, t), n) in idx.iter().zip(allocate(total, &emp)).zip(allocate(new, &emp)) {
            rows.push((i, t, n));
        }
    }
    rows.sort_by_key(|r| r.0);
    let pct_total = percentiles(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let pct_new = percentiles(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    let scores: Vec<f64> = pct_total.iter().zip(&pct_new).map(|(a, b)| (a + b) / 2.0).collect();
    let categories = categorize(&scores);
    let all_tied = scores.windows(2).all(|w| w[0] == w[1]);
    let degenerate = rows.len() < 3 || all_tied;
    if degenerate {
        warnings.push(format!(
            "severity categories are degenerate ({} hospitals ranked{})",
            rows.len(),
            if all_tied { ", all scores equal" } else { "" }
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let records = rows
        .iter()
        .enumerate()
        .map(|(j, &(i, t, n))| SeverityRecord {
            hospital_id: hospitals.hospitals[i].id.clone(),
            county: hospitals.hospitals[i].county.clone(),
            alloc_total: t,
            alloc_new7: n,
            pct_total: pct_total[j],
            pct_new: pct_new[j],
            score: scores[j],
            category: categories[j],
        })
        .collect();
    Ok(SeverityIndex {
        records,
        degenerate,
        warnings,
    })
}

/// Current deaths and predicted seven-day new deaths (ensemble value at
/// horizon 7 minus the last observation) per county.
pub fn severity_inputs<T: Scalar>(
    panel: &CountyPanel,
    set: &ForecastSet<T>,
) -> Result<(BTreeMap<CountyId, f64>, BTreeMap<CountyId, f64>)> {
    let clep = set
        .clep
        .as_ref()
        .ok_or_else(|| Error::Config("severity needs ensemble forecasts".into()))?;
    if set.horizon < NEW_DEATHS_HORIZON {
        return Err(Error::Config(format!(
            "severity needs forecasts {NEW_DEATHS_HORIZON} days ahead, got {}",
            set.horizon
        )));
    }
    let mut totals = BTreeMap::new();
    let mut new7 = BTreeMap::new();
    for (c, f) in clep.iter().enumerate() {
        let last = set.last_observed[c].as_f64();
        totals.insert(panel.county(c).clone(), last);
        new7.insert(
            panel.county(c).clone(),
            (f.values[NEW_DEATHS_HORIZON - 1].as_f64() - last).max(0.0),
        );
    }
    Ok((totals, new7))
}

pub fn write_severity<W: Write>(w: W, index: &SeverityIndex) -> Result<()> {
    let mut out = schema_writer(
        w,
        SEVERITY_SCHEMA,
        &[
            "hospital_id",
            "countyFIPS",
            "alloc_total",
            "alloc_new7",
            "pct_total",
            "pct_new",
            "score",
            "category",
        ],
    )?;
    for r in &index.records {
        out.write_record([
            r.hospital_id.clone(),
            r.county.to_string(),
            r.alloc_total.to_string(),
            r.alloc_new7.to_string(),
            r.pct_total.to_string(),
            r.pct_new.to_string(),
            r.score.to_string(),
            r.category.as_str().to_string(),
        ])
        .map_err(|e| Error::csv(SEVERITY_SCHEMA, e))?;
    }
    out.flush().map_err(|e| Error::io(SEVERITY_SCHEMA, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Hospital;
    use proptest::prelude::*;

    fn id(s: &str) -> CountyId {
        s.parse().unwrap()
    }

    fn table(rows: &[(&str, &str, u64)]) -> HospitalTable {
        HospitalTable {
            hospitals: rows
                .iter()
                .map(|&(h, c, e)| Hospital {
                    id: h.into(),
                    county: id(c),
                    employees: e,
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate(40.0, &[100, 300]), vec![10.0, 30.0]);
        assert_eq!(allocate(40.0, &[7]), vec![40.0]);
        assert_eq!(allocate(10.0, &[0, 0]), vec![5.0, 5.0]);
    }

    #[test]
    fn percentile_ties_share_value() {
        assert_eq!(percentiles(&[1.0, 2.0, 3.0]), vec![0.0, 50.0, 100.0]);
        assert_eq!(percentiles(&[2.0, 2.0, 5.0]), vec![0.0, 0.0, 100.0]);
    }

    #[test]
    fn three_hospitals_one_per_category() {
        let h = table(&[("a", "01001", 10), ("b", "01003", 10), ("c", "01005", 10)]);
        let totals = BTreeMap::from([(id("01001"), 1.0), (id("01003"), 5.0), (id("01005"), 9.0)]);
        let new7 = BTreeMap::from([(id("01001"), 0.5), (id("01003"), 2.0), (id("01005"), 4.0)]);
        let idx = severity_index(&h, &totals, &new7).unwrap();
        let cats: Vec<Category> = idx.records.iter().map(|r| r.category).collect();
        assert_eq!(cats, vec![Category::Low, Category::Medium, Category::High]);
        assert_eq!(idx.records[2].score, 100.0);
        assert!(!idx.degenerate);
    }

    #[test]
    fn equal_scores_share_category_and_flag() {
        let h = table(&[("a", "01001", 10), ("b", "01001", 10), ("c", "01001", 10)]);
        let totals = BTreeMap::from([(id("01001"), 30.0)]);
        let new7 = BTreeMap::from([(id("01001"), 3.0)]);
        let idx = severity_index(&h, &totals, &new7).unwrap();
        assert!(idx.records.iter().all(|r| r.category == Category::Low));
        assert!(idx.degenerate);
    }

    #[test]
    fn too_few_hospitals_flagged() {
        let h = table(&[("a", "01001", 1), ("b", "01003", 1)]);
        let totals = BTreeMap::from([(id("01001"), 1.0), (id("01003"), 2.0)]);
        let idx = severity_index(&h, &totals, &totals).unwrap();
        assert!(idx.degenerate);
    }

    #[test]
    fn csv_has_schema_and_header() {
        let h = table(&[("a", "01001", 1)]);
        let totals = BTreeMap::from([(id("01001"), 4.0)]);
        let idx = severity_index(&h, &totals, &totals).unwrap();
        let mut buf = Vec::new();
        write_severity(&mut buf, &idx).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "# schema=clep-severity/1\nhospital_id,countyFIPS,alloc_total,alloc_new7,pct_total,pct_new,score,category\na,01001,4,4,"
        ));
    }

    proptest! {
        #[test]
        fn allocation_conserves_mass(
            value in 0.0f64..1e6,
            emp in proptest::collection::vec(0u64..5000, 1..10),
        ) {
            let s: f64 = allocate(value, &emp).iter().sum();
            prop_assert!((s - value).abs() <= 1e-9 * value.max(1.0));
        }

        #[test]
        fn index_is_scale_invariant(
            counties in proptest::collection::vec((0u32..500, 0u32..100, 1u64..900), 3..12),
            scale in 0.01f64..100.0,
        ) {
            let ids: Vec<String> = (0..counties.len()).map(|i| format!("{:05}", 1001 + 2 * i)).collect();
            let rows: Vec<(&str, &str, u64)> = ids
                .iter()
                .zip(&counties)
                .map(|(c, &(_, _, e))| (c.as_str(), c.as_str(), e))
                .collect();
            let h = table(&rows);
            let build = |k: f64| {
                let t: BTreeMap<CountyId, f64> =
                    ids.iter().zip(&counties).map(|(c, &(d, _, _))| (id(c), k * d as f64)).collect();
                let n: BTreeMap<CountyId, f64> =
                    ids.iter().zip(&counties).map(|(c, &(_, d, _))| (id(c), k * d as f64)).collect();
                severity_index(&h, &t, &n).unwrap()
            };
            let a = build(1.0);
            let b = build(scale);
            for (x, y) in a.records.iter().zip(&b.records) {
                prop_assert_eq!(x.pct_total, y.pct_total);
                prop_assert_eq!(x.pct_new, y.pct_new);
                prop_assert_eq!(x.category, y.category);
            }
        }
    }
}
