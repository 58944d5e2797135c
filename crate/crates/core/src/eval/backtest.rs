use std::collections::BTreeMap;

use serde::Serialize;

use super::engine::{EngineConfig, Issued, RollingEngine};
use super::metrics::{coverage, day_metrics, normalized_length, summary_percentiles, DayMetrics, Summary};
use crate::error::{Error, Result};
use crate::ingest::{eligible_counties, Day, DEFAULT_ELIGIBILITY_THRESHOLD};
use crate::predictors::PredictorInputs;
use crate::scalar::Scalar;

/// Name used for the ensemble in reports.
pub const CLEP_NAME: &str = "clep";

#[derive(Clone, Debug, PartialEq)]
pub struct BacktestConfig<T> {
    /// First target day scored.
    pub start: Day,
    /// Last target day scored.
    pub end: Day,
    /// Horizons scored (forecasts are produced for every horizon up to the largest).
    pub horizons: Vec<usize>,
    pub eligibility_threshold: u64,
    pub engine: EngineConfig<T>,
}

impl<T: Scalar> BacktestConfig<T> {
    pub fn new(start: Day, end: Day) -> Self {
        let horizons = vec![3, 5, 7, 14];
        BacktestConfig {
            start,
            end,
            engine: EngineConfig {
                max_horizon: 14,
                interval_horizons: horizons.clone(),
                ..EngineConfig::default()
            },
            horizons,
            eligibility_threshold: DEFAULT_ELIGIBILITY_THRESHOLD,
        }
    }

    /// Sets the scored horizons, which also receive intervals.
    pub fn with_horizons(mut self, horizons: Vec<usize>) -> Self {
        self.engine.max_horizon = horizons.iter().copied().max().unwrap_or(1);
        self.engine.interval_horizons.clone_from(&horizons);
        self.horizons = horizons;
        self
    }
}

/// Metrics of one predictor for one target day and horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DailyMetricRow {
    pub day: Day,
    pub horizon: usize,
    pub predictor: String,
    pub metrics: DayMetrics,
}

/// Interval quality for one county and horizon over the scored days.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalStat {
    pub county: usize,
    pub horizon: usize,
    pub n_days: usize,
    pub coverage: f64,
    pub normalized_length: f64,
}

/// Observed count, ensemble forecast and interval for one county, target day
/// and horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub county: usize,
    pub target: Day,
    pub horizon: usize,
    pub observed: f64,
    pub clep: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSummaries {
    pub mape: Option<Summary>,
    pub raw_mae: Option<Summary>,
    pub sqrt_mae: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalSummaries {
    pub n_counties: usize,
    pub coverage: Option<Summary>,
    pub normalized_length: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BacktestReport {
    pub start: Day,
    pub end: Day,
    pub first_as_of: Day,
    pub daily: Vec<DailyMetricRow>,
    pub intervals: Vec<IntervalStat>,
    pub trajectories: Vec<TrajectoryRow>,
    /// `metrics[predictor][horizon]` summaries over the daily series.
    pub metrics: BTreeMap<String, BTreeMap<usize, MetricSummaries>>,
    /// Summaries over counties of per-county coverage and normalized length.
    pub interval_summary: BTreeMap<usize, IntervalSummaries>,
    /// Target days with no eligible county.
    pub skipped_days: Vec<Day>,
    pub warnings: Vec<String>,
}

impl BacktestReport {
    /// Median of the daily MAPE series of `predictor` at `horizon`.
    pub fn median_mape(&self, predictor: &str, horizon: usize) -> Option<f64> {
        Some(self.metrics.get(predictor)?.get(&horizon)?.mape?.median)
    }
}

#[derive(Default)]
struct IntervalAcc<T> {
    cases: Vec<(T, T, T)>,
}

/// Rolls the engine over the panel and scores target days `start..=end`.
/// `on_issue` sees every forecast set as it is issued.
pub fn run_backtest_with<T: Scalar>(
    inputs: PredictorInputs<'_>,
    config: &BacktestConfig<T>,
    mut on_issue: impl FnMut(&Issued<T>),
) -> Result<BacktestReport> {
    let panel = inputs.panel;
    if config.horizons.is_empty() || config.horizons.contains(&0) {
        return Err(Error::Config("backtest horizons must be non-empty and start at 1".into()));
    }
    if config.start > config.end {
        return Err(Error::Config("backtest start after end".into()));
    }
    if config.end >= panel.n_days() {
        return Err(Error::DayOutOfRange {
            day: config.end,
            n_days: panel.n_days(),
        });
    }
    let mut engine_cfg = config.engine.clone();
    for &h in &config.horizons {
        if !engine_cfg.interval_horizons.contains(&h) {
            engine_cfg.interval_horizons.push(h);
        }
    }
    engine_cfg.interval_horizons.sort_unstable();
    engine_cfg.max_horizon = engine_cfg.max_horizon.max(*config.horizons.iter().max().unwrap());
    let k_max = engine_cfg.forecast_horizon();
    let needed = k_max + engine_cfg.weight_warm_up();
    if config.start < needed {
        return Err(Error::InsufficientWarmUp(format!(
            "scoring from day {} needs {needed} earlier days ({k_max} for the longest horizon and {} for the ensemble loss window); the panel starts {} days before",
            config.start,
            engine_cfg.weight_warm_up(),
            config.start
        )));
    }
    let first_as_of = config.start.saturating_sub(engine_cfg.full_warm_up() + k_max);
    let mepi_window = engine_cfg.mepi.window;
    let mut engine = RollingEngine::new(inputs, engine_cfg)?;
    let kinds: Vec<String> = engine
        .config()
        .forecast_kinds()
        .iter()
        .map(|k| k.name().to_string())
        .chain([CLEP_NAME.to_string()])
        .collect();

    let mut daily = Vec::new();
    let mut skipped_days = Vec::new();
    let mut trajectories = Vec::new();
    let mut acc: BTreeMap<(usize, usize), IntervalAcc<T>> = BTreeMap::new();

    for day in first_as_of..=config.end {
        engine.observe(day);
        if day >= config.start {
            let eligible = eligible_counties(panel, day, config.eligibility_threshold)?;
            if eligible.is_empty() {
                log::info!("day {day}: no eligible counties; skipped");
                skipped_days.push(day);
            }
            for &h in &config.horizons {
                let Some(issued) = engine.issued(day - h) else {
                    continue;
                };
                let observed: Vec<T> = eligible
                    .iter()
                    .map(|&c| T::from_count(panel.deaths(c)[day]))
                    .collect();
                let mut per_kind: Vec<(String, Vec<T>)> = issued
                    .set
                    .predictors
                    .iter()
                    .map(|(k, f)| {
                        (k.name().to_string(), eligible.iter().map(|&c| f[c].values[h - 1]).collect())
                    })
                    .collect();
                per_kind.push((
                    CLEP_NAME.to_string(),
                    eligible.iter().map(|&c| issued.clep_value(c, h)).collect(),
                ));
                for (name, preds) in per_kind {
                    let pairs: Vec<(T, T)> = preds.into_iter().zip(observed.iter().copied()).collect();
                    if let Some(metrics) = day_metrics(&pairs) {
                        daily.push(DailyMetricRow {
                            day,
                            horizon: h,
                            predictor: name,
                            metrics,
                        });
                    }
                }
                for (&c, &y) in eligible.iter().zip(&observed) {
                    let Some(iv) = issued.interval(c, h) else {
                        continue;
                    };
                    trajectories.push(TrajectoryRow {
                        county: c,
                        target: day,
                        horizon: h,
                        observed: y.as_f64(),
                        clep: issued.clep_value(c, h).as_f64(),
                        lower: iv.lower.as_f64(),
                        upper: iv.upper.as_f64(),
                    });
                    if iv.is_warm(mepi_window) {
                        acc.entry((c, h)).or_default().cases.push((iv.lower, iv.upper, y));
                    }
                }
            }
        }
        if day < config.end {
            let issued = engine.issue(day)?;
            on_issue(issued);
        }
        engine.prune(day);
    }

    let intervals: Vec<IntervalStat> = acc
        .into_iter()
        .filter_map(|((county, horizon), a)| {
            Some(IntervalStat {
                county,
                horizon,
                n_days: a.cases.len(),
                coverage: coverage(&a.cases)?,
                normalized_length: normalized_length(&a.cases)?,
            })
        })
        .collect();

    let mut metrics = BTreeMap::new();
    for name in &kinds {
        let mut by_h = BTreeMap::new();
        for &h in &config.horizons {
            let rows: Vec<&DailyMetricRow> = daily
                .iter()
                .filter(|r| r.horizon == h && &r.predictor == name)
                .collect();
            let series = |f: fn(&DayMetrics) -> f64| -> Vec<f64> { rows.iter().map(|r| f(&r.metrics)).collect() };
            by_h.insert(
                h,
                MetricSummaries {
                    mape: summary_percentiles(&series(|m| m.mape)),
                    raw_mae: summary_percentiles(&series(|m| m.raw_mae)),
                    sqrt_mae: summary_percentiles(&series(|m| m.sqrt_mae)),
                },
            );
        }
        metrics.insert(name.clone(), by_h);
    }
    let mut interval_summary = BTreeMap::new();
    for &h in &config.horizons {
        let stats: Vec<&IntervalStat> = intervals.iter().filter(|s| s.horizon == h).collect();
        let cov: Vec<f64> = stats.iter().map(|s| s.coverage).collect();
        let nl: Vec<f64> = stats.iter().map(|s| s.normalized_length).collect();
        interval_summary.insert(
            h,
            IntervalSummaries {
                n_counties: stats.len(),
                coverage: summary_percentiles(&cov),
                normalized_length: summary_percentiles(&nl),
            },
        );
    }
    let mut warnings = engine.warnings;
    warnings.dedup();
    Ok(BacktestReport {
        start: config.start,
        end: config.end,
        first_as_of,
        daily,
        intervals,
        trajectories,
        metrics,
        interval_summary,
        skipped_days,
        warnings,
    })
}

pub fn run_backtest<T: Scalar>(
    inputs: PredictorInputs<'_>,
    config: &BacktestConfig<T>,
) -> Result<BacktestReport> {
    run_backtest_with(inputs, config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{neighbor_aggregates, AdjacencyGraph, CountyId, CountyPanel};
    use chrono::NaiveDate;

    fn linear_panel(days: usize) -> CountyPanel {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let counties: Vec<CountyId> = ["01001", "01003", "01005"].iter().map(|s| s.parse().unwrap()).collect();
        let deaths: Vec<Vec<u64>> = (0..3)
            .map(|c| (0..days).map(|d| 10 + (c as u64 + 2) * d as u64).collect())
            .collect();
        let cases = deaths.iter().map(|d| d.iter().map(|v| 30 * v + 7).collect()).collect();
        let p = CountyPanel::new(start, counties, deaths, Some(cases)).unwrap();
        let g = AdjacencyGraph::from_pairs([(p.county(0).clone(), p.county(2).clone())]);
        neighbor_aggregates(p, &g)
    }

    #[test]
    fn linear_growth_is_predicted_exactly_by_linear() {
        let p = linear_panel(30);
        let cfg = BacktestConfig::<f64>::new(15, 29).with_horizons(vec![3]);
        let report = run_backtest(PredictorInputs::new(&p), &cfg).unwrap();
        let lin: Vec<&DailyMetricRow> = report.daily.iter().filter(|r| r.predictor == "linear").collect();
        assert_eq!(lin.len(), 15);
        for r in lin {
            assert!(r.metrics.mape < 1e-9, "{r:?}");
        }
        assert!(report.median_mape("linear", 3).unwrap() < 1e-9);
        assert!(report.median_mape(CLEP_NAME, 3).is_some());
    }

    #[test]
    fn short_panel_is_fatal() {
        let p = linear_panel(20);
        let cfg = BacktestConfig::<f64>::new(5, 19);
        let err = run_backtest(PredictorInputs::new(&p), &cfg).unwrap_err();
        assert!(matches!(err, Error::InsufficientWarmUp(_)));
    }

    #[test]
    fn end_beyond_panel_is_fatal() {
        let p = linear_panel(20);
        let cfg = BacktestConfig::<f64>::new(15, 20).with_horizons(vec![1]);
        assert!(matches!(
            run_backtest(PredictorInputs::new(&p), &cfg).unwrap_err(),
            Error::DayOutOfRange { .. }
        ));
    }
}
