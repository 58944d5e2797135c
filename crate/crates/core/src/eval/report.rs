use std::fs;
use std::io::Write;
use std::path::Path;

use super::backtest::{BacktestReport, CLEP_NAME};
use super::engine::Issued;
use crate::error::{Error, Result};
use crate::ingest::CountyPanel;
use crate::scalar::Scalar;

pub const FORECAST_SCHEMA: &str = "clep-forecast/1";
pub const INTERVAL_SCHEMA: &str = "clep-intervals/1";
pub const WEIGHT_SCHEMA: &str = "clep-weights/1";
pub const METRICS_SCHEMA: &str = "clep-metrics-daily/1";
pub const INTERVAL_EVAL_SCHEMA: &str = "clep-intervals-eval/1";
pub const TRAJECTORY_SCHEMA: &str = "clep-trajectories/1";
pub const SUMMARY_SCHEMA: &str = "clep-summary/1";
pub const RANK_SCHEMA: &str = "clep-rank-diagnostic/1";

/// CSV writer preceded by a `# schema=...` comment line.
pub fn schema_writer<W: Write>(mut w: W, schema: &str, header: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(w, "# schema={schema}").map_err(|e| Error::io("<output>", e))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(|e| Error::csv(schema, e))?;
    Ok(out)
}

fn row<W: Write>(out: &mut csv::Writer<W>, schema: &str, fields: &[String]) -> Result<()> {
    out.write_record(fields).map_err(|e| Error::csv(schema, e))
}

fn finish<W: Write>(mut out: csv::Writer<W>, schema: &str) -> Result<()> {
    out.flush().map_err(|e| Error::io(schema, e))
}

fn date(panel: &CountyPanel, day: usize) -> String {
    panel.date_of(day).format("%Y-%m-%d").to_string()
}

/// Point forecasts of every predictor and the ensemble for horizons `1..=horizon`.
pub fn write_forecasts<T: Scalar, W: Write>(
    w: W,
    panel: &CountyPanel,
    issued: &Issued<T>,
    horizon: usize,
) -> Result<usize> {
    let mut out = schema_writer(
        w,
        FORECAST_SCHEMA,
        &["countyFIPS", "as_of_date", "horizon", "predictor", "value", "fallback_flag"],
    )?;
    let as_of = date(panel, issued.set.as_of);
    let clep = issued.set.clep.as_ref().map(|f| (CLEP_NAME, f));
    let named = issued.set.predictors.iter().map(|(k, f)| (k.name(), f)).chain(clep);
    let mut n = 0;
    for (name, forecasts) in named {
        for (c, f) in forecasts.iter().enumerate() {
            for (k, v) in f.values.iter().take(horizon).enumerate() {
                row(
                    &mut out,
                    FORECAST_SCHEMA,
                    &[
                        panel.county(c).to_string(),
                        as_of.clone(),
                        (k + 1).to_string(),
                        name.to_string(),
                        v.to_string(),
                        f.fallback.as_str().to_string(),
                    ],
                )?;
                n += 1;
            }
        }
    }
    finish(out, FORECAST_SCHEMA)?;
    Ok(n)
}

/// Prediction intervals with horizon at most `horizon`.
pub fn write_intervals<T: Scalar, W: Write>(
    w: W,
    panel: &CountyPanel,
    issued: &Issued<T>,
    horizon: usize,
) -> Result<usize> {
    let mut out = schema_writer(
        w,
        INTERVAL_SCHEMA,
        &["countyFIPS", "as_of_date", "target_date", "horizon", "lower", "upper"],
    )?;
    let mut n = 0;
    for iv in issued.intervals.iter().filter(|iv| iv.horizon <= horizon) {
        let target = panel
            .start_date()
            .checked_add_days(chrono::Days::new(iv.target as u64))
            .expect("target date in calendar range");
        row(
            &mut out,
            INTERVAL_SCHEMA,
            &[
                panel.county(iv.county).to_string(),
                date(panel, iv.as_of),
                target.format("%Y-%m-%d").to_string(),
                iv.horizon.to_string(),
                iv.lower.to_string(),
                iv.upper.to_string(),
            ],
        )?;
        n += 1;
    }
    finish(out, INTERVAL_SCHEMA)?;
    Ok(n)
}

/// Ensemble weights per county and member.
pub fn write_weights<T: Scalar, W: Write>(w: W, panel: &CountyPanel, issued: &Issued<T>) -> Result<usize> {
    let mut out = schema_writer(w, WEIGHT_SCHEMA, &["countyFIPS", "as_of_date", "predictor", "weight"])?;
    let as_of = date(panel, issued.set.as_of);
    let mut n = 0;
    for (c, ws) in issued.clep.weights.iter().enumerate() {
        for (m, wt) in issued.clep.members.iter().zip(ws) {
            row(
                &mut out,
                WEIGHT_SCHEMA,
                &[
                    panel.county(c).to_string(),
                    as_of.clone(),
                    m.name().to_string(),
                    wt.to_string(),
                ],
            )?;
            n += 1;
        }
    }
    finish(out, WEIGHT_SCHEMA)?;
    Ok(n)
}

pub fn write_metrics_daily<W: Write>(w: W, panel: &CountyPanel, report: &BacktestReport) -> Result<()> {
    let mut out = schema_writer(
        w,
        METRICS_SCHEMA,
        &["date", "horizon", "predictor", "n_counties", "mape", "raw_mae", "sqrt_mae"],
    )?;
    for r in &report.daily {
        row(
            &mut out,
            METRICS_SCHEMA,
            &[
                date(panel, r.day),
                r.horizon.to_string(),
                r.predictor.clone(),
                r.metrics.n_counties.to_string(),
                r.metrics.mape.to_string(),
                r.metrics.raw_mae.to_string(),
                r.metrics.sqrt_mae.to_string(),
            ],
        )?;
    }
    finish(out, METRICS_SCHEMA)
}

pub fn write_intervals_eval<W: Write>(w: W, panel: &CountyPanel, report: &BacktestReport) -> Result<()> {
    let mut out = schema_writer(
        w,
        INTERVAL_EVAL_SCHEMA,
        &["countyFIPS", "horizon", "n_days", "coverage", "normalized_length"],
    )?;
    for s in &report.intervals {
        row(
            &mut out,
            INTERVAL_EVAL_SCHEMA,
            &[
                panel.county(s.county).to_string(),
                s.horizon.to_string(),
                s.n_days.to_string(),
                s.coverage.to_string(),
                s.normalized_length.to_string(),
            ],
        )?;
    }
    finish(out, INTERVAL_EVAL_SCHEMA)
}

/// Long-format observed / ensemble / interval series for plotting.
pub fn write_trajectories<W: Write>(w: W, panel: &CountyPanel, report: &BacktestReport) -> Result<()> {
    let mut out = schema_writer(
        w,
        TRAJECTORY_SCHEMA,
        &["countyFIPS", "target_date", "horizon", "observed", "clep", "lower", "upper"],
    )?;
    for t in &report.trajectories {
        row(
            &mut out,
            TRAJECTORY_SCHEMA,
            &[
                panel.county(t.county).to_string(),
                date(panel, t.target),
                t.horizon.to_string(),
                t.observed.to_string(),
                t.clep.to_string(),
                t.lower.to_string(),
                t.upper.to_string(),
            ],
        )?;
    }
    finish(out, TRAJECTORY_SCHEMA)
}

pub fn summary_json(panel: &CountyPanel, report: &BacktestReport) -> Result<serde_json::Value> {
    fn json(v: impl serde::Serialize) -> Result<serde_json::Value> {
        serde_json::to_value(v).map_err(|e| Error::Json {
            context: "summary".into(),
            source: e,
        })
    }
    Ok(serde_json::json!({
        "schema": SUMMARY_SCHEMA,
        "start_date": date(panel, report.start),
        "end_date": date(panel, report.end),
        "first_as_of_date": date(panel, report.first_as_of),
        "percentile_convention": "nearest-rank",
        "metrics": json(&report.metrics)?,
        "intervals": json(&report.interval_summary)?,
        "skipped_days": report.skipped_days.iter().map(|&d| date(panel, d)).collect::<Vec<_>>(),
        "warnings": report.warnings,
    }))
}

/// Writes `metrics_daily.csv`, `intervals_eval.csv`, `trajectories.csv` and
/// `summary.json` into `dir`.
pub fn write_backtest(dir: &Path, panel: &CountyPanel, report: &BacktestReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(p, e))
    };
    write_metrics_daily(create("metrics_daily.csv")?, panel, report)?;
    write_intervals_eval(create("intervals_eval.csv")?, panel, report)?;
    write_trajectories(create("trajectories.csv")?, panel, report)?;
    let summary = summary_json(panel, report)?;
    let mut f = create("summary.json")?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| Error::Json {
        context: "summary.json".into(),
        source: e,
    })?;
    writeln!(f).and_then(|_| f.flush()).map_err(|e| Error::io(dir.join("summary.json"), e))
}

/// Slot-average ranks, one row per horizon with any complete tuple.
pub fn write_rank_diagnostic<W: Write>(w: W, rows: &[(usize, usize, [f64; 6])]) -> Result<()> {
    let mut out = schema_writer(
        w,
        RANK_SCHEMA,
        &["horizon", "n_tuples", "future", "lag1", "lag2", "lag3", "lag4", "lag5"],
    )?;
    for (h, n, ranks) in rows {
        let mut fields = vec![h.to_string(), n.to_string()];
        fields.extend(ranks.iter().map(|r| r.to_string()));
        row(&mut out, RANK_SCHEMA, &fields)?;
    }
    finish(out, RANK_SCHEMA)
}
