use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clep_core::clep::{LossTransform, WeightConfig};
use clep_core::eval::{self, report, BacktestConfig, EngineConfig, RollingEngine};
use clep_core::ingest::{
    load_adjacency, load_county_series, load_demographics, load_hospitals, load_interventions,
    neighbor_aggregates, parse_date, CleanPolicy, CountyPanel, Day, DemographicsTable, InterventionTable,
};
use clep_core::mepi::{rank_diagnostic, six_tuples, MepiConfig};
use clep_core::predictors::{IndicatorOptions, PredictorInputs, PredictorKind, PredictorOptions};
use clep_core::severity::{severity_index, severity_inputs, write_severity, NEW_DEATHS_HORIZON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{InputArgs, ModelArgs, TableArgs};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// A loaded panel and the optional tables that accompany it.
pub struct Loaded {
    pub panel: CountyPanel,
    pub demographics: Option<DemographicsTable>,
    pub interventions: Option<InterventionTable>,
    pub warnings: Vec<String>,
}

impl Loaded {
    pub fn inputs(&self) -> PredictorInputs<'_> {
        PredictorInputs {
            panel: &self.panel,
            demographics: self.demographics.as_ref(),
            interventions: self.interventions.as_ref(),
        }
    }
}

pub fn load(deaths: &Path, tables: &TableArgs) -> Result<Loaded> {
    let clean = if tables.no_clean {
        CleanPolicy::Raw
    } else {
        CleanPolicy::RunningMax
    };
    let deaths = load_county_series(deaths, clean)?;
    let cases = tables
        .cases
        .as_ref()
        .map(|p| load_county_series(p, clean))
        .transpose()?;
    let mut warnings: Vec<String> = deaths.warnings.clone();
    if let Some(c) = &cases {
        warnings.extend(c.warnings.iter().cloned());
    }
    let (mut panel, w) = CountyPanel::from_series(deaths, cases)?;
    warnings.extend(w);
    if let Some(path) = &tables.adjacency {
        let graph = load_adjacency(path)?;
        let unknown = graph.unknown_counties(&panel);
        if !unknown.is_empty() {
            warnings.push(format!("{} adjacency counties are not in the panel", unknown.len()));
        }
        panel = neighbor_aggregates(panel, &graph);
    }
    let demographics = tables
        .demographics
        .as_ref()
        .map(|p| load_demographics(p, &panel))
        .transpose()?;
    if let Some(d) = &demographics {
        warnings.extend(d.warnings.iter().cloned());
    }
    let interventions = tables.interventions.as_ref().map(load_interventions).transpose()?;
    Ok(Loaded {
        panel,
        demographics,
        interventions,
        warnings,
    })
}

fn parse_kinds(names: &[String]) -> Result<Vec<PredictorKind>> {
    names
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map_err(CliError::from))
        .collect()
}

pub fn engine_config(model: &ModelArgs, max_horizon: usize, interval_horizons: Vec<usize>) -> Result<EngineConfig<f64>> {
    let transform: LossTransform = model.transform.parse()?;
    let config = EngineConfig {
        predictors: parse_kinds(&model.predictors)?,
        ensemble: parse_kinds(&model.ensemble)?,
        max_horizon,
        interval_horizons,
        weights: WeightConfig {
            c: model.c,
            mu: model.mu,
            window: model.weight_window,
            loss_horizon: model.loss_horizon,
            transform,
        },
        mepi: MepiConfig {
            window: model.mepi_window,
            clamp_to_last: !model.unclamped,
        },
        predictor: PredictorOptions {
            indicators: IndicatorOptions {
                weekday: model.weekday,
                social_distancing: model.social_distancing,
            },
            ..PredictorOptions::default()
        },
    };
    config.validate()?;
    Ok(config)
}

fn resolve_day(panel: &CountyPanel, raw: Option<&str>, flag: &str) -> Result<Day> {
    let Some(raw) = raw else {
        return Ok(panel.last_day());
    };
    let date = parse_date(raw).ok_or_else(|| CliError::Usage(format!("{flag}: unparseable date {raw:?}")))?;
    panel.day_of(date).ok_or_else(|| {
        CliError::Usage(format!(
            "{flag}: {date} is outside the panel ({} to {})",
            panel.start_date(),
            panel.date_of(panel.last_day())
        ))
    })
}

fn max_horizon(horizons: &[usize]) -> Result<usize> {
    match horizons.iter().copied().max() {
        Some(h) if h > 0 && !horizons.contains(&0) => Ok(h),
        _ => Err(CliError::Usage("--horizons must be positive".into())),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&path, e))
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

pub fn ingest_check(inputs: &InputArgs) -> Result<serde_json::Value> {
    let loaded = load(&inputs.deaths, &inputs.tables)?;
    let p = &loaded.panel;
    Ok(serde_json::json!({
        "counties": p.n_counties(),
        "days": p.n_days(),
        "start_date": p.start_date().to_string(),
        "end_date": p.date_of(p.last_day()).to_string(),
        "has_cases": p.has_cases(),
        "has_neighbors": p.has_neighbors(),
        "demographics_rows": loaded.demographics.as_ref().map(|d| d.len()),
        "interventions": loaded.interventions.as_ref().map(|t| t.dates.len()),
        "warnings": loaded.warnings,
    }))
}

pub struct ForecastOutput {
    pub files: Vec<PathBuf>,
    pub rows: usize,
}

pub fn forecast(
    inputs: &InputArgs,
    model: &ModelArgs,
    as_of: Option<&str>,
    horizons: &[usize],
    out: &Path,
) -> Result<ForecastOutput> {
    let loaded = load(&inputs.deaths, &inputs.tables)?;
    report_warnings(&loaded.warnings);
    let k = max_horizon(horizons)?;
    let t = resolve_day(&loaded.panel, as_of, "--as-of")?;
    let config = engine_config(model, k, (1..=k).collect())?;
    let (issued, warnings) = eval::forecast_as_of(loaded.inputs(), t, config)?;
    report_warnings(&warnings);
    let p = &loaded.panel;
    let rows = report::write_forecasts(create(out, "forecast.csv")?, p, &issued, k)?;
    report::write_intervals(create(out, "intervals.csv")?, p, &issued, k)?;
    report::write_weights(create(out, "weights.csv")?, p, &issued)?;
    Ok(ForecastOutput {
        files: ["forecast.csv", "intervals.csv", "weights.csv"]
            .iter()
            .map(|f| out.join(f))
            .collect(),
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn backtest(
    inputs: &InputArgs,
    model: &ModelArgs,
    start: &str,
    end: Option<&str>,
    horizons: &[usize],
    eligibility: u64,
    out: &Path,
) -> Result<serde_json::Value> {
    let loaded = load(&inputs.deaths, &inputs.tables)?;
    report_warnings(&loaded.warnings);
    let p = &loaded.panel;
    let start = resolve_day(p, Some(start), "--start")?;
    let end = resolve_day(p, end, "--end")?;
    let k = max_horizon(horizons)?;
    let mut config = BacktestConfig::new(start, end).with_horizons(horizons.to_vec());
    config.eligibility_threshold = eligibility;
    config.engine = engine_config(model, k, horizons.to_vec())?;
    let rep = eval::run_backtest(loaded.inputs(), &config)?;
    report::write_backtest(out, p, &rep)?;
    report::summary_json(p, &rep).map_err(CliError::from)
}

/// Average ranks per horizon, from errors of a rolling run over the whole panel.
pub fn diagnose_panel(loaded: &Loaded, model: &ModelArgs, horizons: &[usize]) -> Result<Vec<(usize, usize, [f64; 6])>> {
    let k = max_horizon(horizons)?;
    let config = engine_config(model, k, horizons.to_vec())?;
    let mut engine = RollingEngine::new(loaded.inputs(), config)?;
    for day in 0..loaded.panel.n_days() {
        engine.observe(day);
        engine.issue(day)?;
        engine.prune(day);
    }
    report_warnings(&engine.warnings);
    let mut rows = Vec::new();
    for &h in horizons {
        let mut tuples = Vec::new();
        for c in 0..loaded.panel.n_counties() {
            if let Some(series) = engine.errors().series(c, h) {
                tuples.extend(six_tuples(series, h));
            }
        }
        if let Some(ranks) = rank_diagnostic(&tuples) {
            rows.push((h, tuples.len(), ranks));
        }
    }
    Ok(rows)
}

/// Average ranks of i.i.d. uniform errors: `n` tuples from one seeded series.
pub fn diagnose_synthetic(n: usize, seed: u64) -> Vec<(usize, usize, [f64; 6])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series: BTreeMap<Day, f64> = (0..n + 5).map(|d| (d, rng.random::<f64>())).collect();
    let tuples = six_tuples(&series, 1);
    rank_diagnostic(&tuples)
        .map(|r| vec![(1, tuples.len(), r)])
        .unwrap_or_default()
}

pub fn write_diagnostic(out: &Path, rows: &[(usize, usize, [f64; 6])]) -> Result<PathBuf> {
    report::write_rank_diagnostic(create(out, "rank_diagnostic.csv")?, rows)?;
    Ok(out.join("rank_diagnostic.csv"))
}

pub fn severity(
    inputs: &InputArgs,
    model: &ModelArgs,
    hospitals: &Path,
    as_of: Option<&str>,
    out: &Path,
) -> Result<serde_json::Value> {
    let loaded = load(&inputs.deaths, &inputs.tables)?;
    report_warnings(&loaded.warnings);
    let p = &loaded.panel;
    let table = load_hospitals(hospitals, p)?;
    report_warnings(&table.warnings);
    let t = resolve_day(p, as_of, "--as-of")?;
    let config = engine_config(model, NEW_DEATHS_HORIZON, vec![NEW_DEATHS_HORIZON])?;
    let (issued, warnings) = eval::forecast_as_of(loaded.inputs(), t, config)?;
    report_warnings(&warnings);
    let (totals, new7) = severity_inputs(p, &issued.set)?;
    let index = severity_index(&table, &totals, &new7)?;
    let mut w = create(out, "severity.csv")?;
    write_severity(&mut w, &index)?;
    w.flush().map_err(|e| CliError::io(out.join("severity.csv"), e))?;
    Ok(serde_json::json!({
        "hospitals": index.records.len(),
        "degenerate": index.degenerate,
        "warnings": index.warnings,
    }))
}
