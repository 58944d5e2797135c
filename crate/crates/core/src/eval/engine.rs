use std::collections::BTreeMap;

use crate::clep::{apply_clep, loss, ClepOutput, LossHistory, WeightConfig};
use crate::error::{Error, Result};
use crate::ingest::Day;
use crate::mepi::{mepi_interval, normalized_error, ErrorStore, MepiConfig, PredictionInterval};
use crate::predictors::{forecast_set, ForecastSet, PredictorInputs, PredictorKind, PredictorOptions};
use crate::scalar::Scalar;

/// Settings shared by live forecasting and backtests.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig<T> {
    /// Predictors forecast every day (ensemble members are always added).
    pub predictors: Vec<PredictorKind>,
    pub ensemble: Vec<PredictorKind>,
    /// Largest horizon forecast.
    pub max_horizon: usize,
    /// Horizons that receive prediction intervals.
    pub interval_horizons: Vec<usize>,
    pub weights: WeightConfig,
    pub mepi: MepiConfig,
    pub predictor: PredictorOptions<T>,
}

impl<T: Scalar> Default for EngineConfig<T> {
    fn default() -> Self {
        EngineConfig {
            predictors: Vec::new(),
            ensemble: vec![PredictorKind::ExpandedShared, PredictorKind::SeparateLinear],
            max_horizon: 14,
            interval_horizons: (1..=14).collect(),
            weights: WeightConfig::default(),
            mepi: MepiConfig::default(),
            predictor: PredictorOptions::default(),
        }
    }
}

impl<T: Scalar> EngineConfig<T> {
    /// Forecast horizon actually produced: large enough for the loss horizon
    /// and every interval horizon.
    pub fn forecast_horizon(&self) -> usize {
        self.interval_horizons
            .iter()
            .copied()
            .chain([self.max_horizon, self.weights.loss_horizon])
            .max()
            .unwrap_or(1)
    }

    /// All predictors forecast each day, in a fixed order without duplicates.
    pub fn forecast_kinds(&self) -> Vec<PredictorKind> {
        let mut kinds: Vec<PredictorKind> = self
            .predictors
            .iter()
            .chain(&self.ensemble)
            .copied()
            .collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    /// Days of forecasts needed before an as-of day's ensemble weights see a
    /// full loss window.
    pub fn weight_warm_up(&self) -> usize {
        self.weights.warm_up_days()
    }

    /// Days before an as-of day from which the rolling engine must start so
    /// that every interval horizon has a full error window with warm weights.
    pub fn full_warm_up(&self) -> usize {
        let k = self.interval_horizons.iter().copied().max().unwrap_or(0);
        k + self.mepi.window.saturating_sub(1) + self.weight_warm_up()
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.ensemble.is_empty() {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        if self.max_horizon == 0 || self.interval_horizons.contains(&0) {
            return Err(Error::Config("horizons start at 1".into()));
        }
        if self.mepi.window == 0 {
            return Err(Error::Config("MEPI window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything issued on one as-of day.
#[derive(Clone, Debug, PartialEq)]
pub struct Issued<T> {
    pub set: ForecastSet<T>,
    pub clep: ClepOutput<T>,
    pub intervals: Vec<PredictionInterval<T>>,
}

impl<T: Scalar> Issued<T> {
    pub fn clep_value(&self, county: usize, horizon: usize) -> T {
        self.set.clep.as_ref().expect("ensemble applied")[county].values[horizon - 1]
    }

    pub fn interval(&self, county: usize, horizon: usize) -> Option<&PredictionInterval<T>> {
        self.intervals
            .iter()
            .find(|iv| iv.county == county && iv.horizon == horizon)
    }
}

/// Day-by-day forecasting loop. On each day it first scores earlier
/// forecasts against that day's observations, then issues new forecasts from
/// data through that day only.
pub struct RollingEngine<'a, T> {
    inputs: PredictorInputs<'a>,
    config: EngineConfig<T>,
    kinds: Vec<PredictorKind>,
    horizon: usize,
    losses: LossHistory<T>,
    errors: ErrorStore<T>,
    issued: BTreeMap<Day, Issued<T>>,
    pub warnings: Vec<String>,
}

impl<'a, T: Scalar> RollingEngine<'a, T> {
    pub fn new(inputs: PredictorInputs<'a>, config: EngineConfig<T>) -> Result<Self> {
        config.validate()?;
        let kinds = config.forecast_kinds();
        let horizon = config.forecast_horizon();
        Ok(RollingEngine {
            inputs,
            config,
            kinds,
            horizon,
            losses: LossHistory::new(),
            errors: ErrorStore::new(),
            issued: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig<T> {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn losses(&self) -> &LossHistory<T> {
        &self.losses
    }

    pub fn errors(&self) -> &ErrorStore<T> {
        &self.errors
    }

    pub fn issued(&self, as_of: Day) -> Option<&Issued<T>> {
        self.issued.get(&as_of)
    }

    /// Records losses and normalized errors of forecasts that target `day`.
    pub fn observe(&mut self, day: Day) {
        let panel = self.inputs.panel;
        let lh = self.config.weights.loss_horizon;
        if let Some(issued) = day.checked_sub(lh).and_then(|a| self.issued.get(&a)) {
            for (&kind, forecasts) in &issued.set.predictors {
                for (c, f) in forecasts.iter().enumerate() {
                    let y = T::from_count(panel.deaths(c)[day]);
                    let l = loss(f.values[lh - 1], y, self.config.weights.transform);
                    self.losses.record(c, kind, day, l);
                }
            }
        }
        for &k in &self.config.interval_horizons {
            let Some(issued) = day.checked_sub(k).and_then(|a| self.issued.get(&a)) else {
                continue;
            };
            for c in 0..panel.n_counties() {
                let y = T::from_count(panel.deaths(c)[day]);
                let delta = normalized_error(y, issued.clep_value(c, k));
                self.errors.record(c, k, day, delta);
            }
        }
    }

    /// Forecasts with data through `as_of`: members, ensemble and intervals.
    pub fn issue(&mut self, as_of: Day) -> Result<&Issued<T>> {
        let panel = self.inputs.panel.truncated(as_of)?;
        let inputs = PredictorInputs {
            panel: &panel,
            ..self.inputs
        };
        let mut set = forecast_set(&inputs, &self.kinds, as_of, self.horizon, &self.config.predictor)?;
        let clep = apply_clep(&mut set, &self.losses, &self.config.ensemble, &self.config.weights)?;
        let combined = set.clep.as_ref().expect("ensemble applied");
        let mut intervals = Vec::with_capacity(combined.len() * self.config.interval_horizons.len());
        for (c, f) in combined.iter().enumerate() {
            for &k in &self.config.interval_horizons {
                intervals.push(mepi_interval(
                    &self.errors,
                    c,
                    as_of,
                    k,
                    f.values[k - 1],
                    set.last_observed[c],
                    &self.config.mepi,
                ));
            }
        }
        self.warnings.extend(set.warnings.iter().cloned());
        let issued = Issued {
            set,
            clep,
            intervals,
        };
        self.issued.insert(as_of, issued);
        Ok(&self.issued[&as_of])
    }

    /// Drops issued forecasts made before `as_of`.
    pub fn forget_before(&mut self, as_of: Day) {
        self.issued = self.issued.split_off(&as_of);
    }

    /// Drops forecasts that can no longer be scored on or after `day`.
    pub fn prune(&mut self, day: Day) {
        let keep = self
            .horizon
            .max(self.config.weights.loss_horizon);
        self.forget_before(day.saturating_sub(keep));
    }
}

/// Forecasts for as-of day `t`, warming the ensemble weights and error
/// history by rolling forward from as early as the panel allows (at most
/// [`EngineConfig::full_warm_up`] days back).
pub fn forecast_as_of<T: Scalar>(
    inputs: PredictorInputs<'_>,
    t: Day,
    config: EngineConfig<T>,
) -> Result<(Issued<T>, Vec<String>)> {
    if t >= inputs.panel.n_days() {
        return Err(Error::DayOutOfRange {
            day: t,
            n_days: inputs.panel.n_days(),
        });
    }
    let first = t.saturating_sub(config.full_warm_up());
    let mut engine = RollingEngine::new(inputs, config)?;
    if t - first < engine.config().weight_warm_up() {
        let msg = format!(
            "only {} days of history before the as-of day; ensemble weights use partial loss windows",
            t - first
        );
        log::warn!("{msg}");
        engine.warnings.push(msg);
    }
    for day in first..=t {
        engine.observe(day);
        engine.issue(day)?;
        engine.prune(day);
    }
    let issued = engine.issued.remove(&t).expect("issued on the last day");
    Ok((issued, engine.warnings))
}
