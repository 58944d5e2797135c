//! The five point predictors of cumulative deaths, their multi-step forecasts
//! and the monotonicity post-processing.

mod indicators;
mod pooled;
mod separate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::FitConfig;
use crate::ingest::{CountyPanel, Day, DemographicsTable, InterventionTable};
use crate::scalar::Scalar;

pub use indicators::{
    augment_indicator_features, is_weekend_report_day, IndicatorBuilder, IndicatorOptions,
    DISTANCING_LAG_DAYS,
};
pub use pooled::{
    pooled_rows, require_expanded_inputs, DemographicsModel, ExpandedModel, SharedModel,
    EXPANDED_FEATURES, POOLING_DEATH_THRESHOLD,
};
pub use separate::{
    exponential_window, linear_window, predict_separate_exponential, predict_separate_linear,
    predict_separate_linear_weekday, EXPONENTIAL_MIN_DAYS, EXPONENTIAL_WINDOW, LINEAR_WEEKDAY_WINDOW,
    LINEAR_WINDOW,
};

/// Elastic-net weight used by the expanded predictor when the distancing flag is on.
pub const DISTANCING_ELASTIC_NET: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    SeparateExponential,
    SeparateLinear,
    Shared,
    ExpandedShared,
    DemographicsShared,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::SeparateExponential,
        PredictorKind::SeparateLinear,
        PredictorKind::Shared,
        PredictorKind::ExpandedShared,
        PredictorKind::DemographicsShared,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::SeparateExponential => "separate_exp",
            PredictorKind::SeparateLinear => "linear",
            PredictorKind::Shared => "shared",
            PredictorKind::ExpandedShared => "expanded_shared",
            PredictorKind::DemographicsShared => "demographics_shared",
        }
    }

    /// Pooled predictors share one fit across counties.
    pub fn is_pooled(self) -> bool {
        matches!(
            self,
            PredictorKind::Shared | PredictorKind::ExpandedShared | PredictorKind::DemographicsShared
        )
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .or(match key.as_str() {
                "separate" | "separate_exponential" | "exponential" => {
                    Some(PredictorKind::SeparateExponential)
                }
                "separate_linear" => Some(PredictorKind::SeparateLinear),
                "demographics" => Some(PredictorKind::DemographicsShared),
                "expanded" => Some(PredictorKind::ExpandedShared),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown predictor {s:?}")))
    }
}

/// Why a forecast is not the predictor's own fitted extrapolation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    None,
    /// Too little history; the last observed value is repeated.
    InsufficientData,
    /// The training window never changed; the last observed value is repeated.
    ConstantWindow,
    /// The fit diverged or produced non-finite values.
    Divergent,
    /// The pooled predictor could not be fitted; values come from the fallback member.
    Imputed,
}

impl Fallback {
    pub fn as_str(self) -> &'static str {
        match self {
            Fallback::None => "none",
            Fallback::InsufficientData => "insufficient_data",
            Fallback::ConstantWindow => "constant_window",
            Fallback::Divergent => "divergent",
            Fallback::Imputed => "imputed",
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Forecasts of one county for horizons `1..=K` (`values[k-1]`).
#[derive(Clone, Debug, PartialEq)]
pub struct CountyForecast<T> {
    pub values: Vec<T>,
    pub fallback: Fallback,
}

/// Raises `p[0]` to at least `last_observed` and makes the sequence non-decreasing.
pub fn enforce_monotonicity<T: Scalar>(predictions: &mut [T], last_observed: T) {
    let mut floor = last_observed;
    for p in predictions.iter_mut() {
        if !(*p >= floor) {
            *p = floor;
        }
        floor = *p;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorOptions<T> {
    pub exponential_window: usize,
    /// Ignored when the weekday indicator is on, which uses a 7-day window.
    pub linear_window: usize,
    pub indicators: IndicatorOptions,
    pub fit: FitConfig<T>,
}

impl<T: Scalar> Default for PredictorOptions<T> {
    fn default() -> Self {
        PredictorOptions {
            exponential_window: EXPONENTIAL_WINDOW,
            linear_window: LINEAR_WINDOW,
            indicators: IndicatorOptions::default(),
            fit: FitConfig::default(),
        }
    }
}

/// Everything the predictors read.
#[derive(Clone, Copy, Debug)]
pub struct PredictorInputs<'a> {
    pub panel: &'a CountyPanel,
    pub demographics: Option<&'a DemographicsTable>,
    pub interventions: Option<&'a InterventionTable>,
}

impl<'a> PredictorInputs<'a> {
    pub fn new(panel: &'a CountyPanel) -> Self {
        PredictorInputs {
            panel,
            demographics: None,
            interventions: None,
        }
    }
}

/// Point forecasts issued with data through day `as_of`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSet<T> {
    pub as_of: Day,
    pub horizon: usize,
    /// Cumulative deaths on `as_of`, per county.
    pub last_observed: Vec<T>,
    /// Per predictor, one forecast per panel county (panel order).
    pub predictors: BTreeMap<PredictorKind, Vec<CountyForecast<T>>>,
    pub clep: Option<Vec<CountyForecast<T>>>,
    pub warnings: Vec<String>,
}

fn check_request(panel: &CountyPanel, t: Day, horizon: usize) -> Result<()> {
    if t >= panel.n_days() {
        return Err(Error::DayOutOfRange {
            day: t,
            n_days: panel.n_days(),
        });
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    Ok(())
}

fn to_real<T: Scalar>(v: &[u64]) -> Vec<T> {
    v.iter().map(|&d| T::from_count(d)).collect()
}

fn flag_divergent<T: Scalar>(values: Vec<T>, divergent_fit: bool) -> CountyForecast<T> {
    let bad = divergent_fit || values.iter().any(|v| !v.is_finite());
    CountyForecast {
        values,
        fallback: if bad { Fallback::Divergent } else { Fallback::None },
    }
}

/// Raw forecasts of one predictor for every county, before monotonicity.
/// Pooled forecasts flagged [`Fallback::Divergent`] still carry the model's
/// values; [`forecast_set`] replaces them.
pub fn forecast_kind<T: Scalar>(
    inputs: &PredictorInputs<'_>,
    kind: PredictorKind,
    t: Day,
    horizon: usize,
    options: &PredictorOptions<T>,
) -> Result<(Vec<CountyForecast<T>>, Vec<String>)> {
    let panel = inputs.panel;
    check_request(panel, t, horizon)?;
    let counties = 0..panel.n_counties();
    let mut warnings = Vec::new();
    let forecasts = match kind {
        PredictorKind::SeparateExponential => counties
            .into_par_iter()
            .map(|c| {
                let w = to_real(exponential_window(panel.deaths(c), t, options.exponential_window));
                let mut f = predict_separate_exponential(&w, horizon, &options.fit);
                if w.is_empty() {
                    f.values = vec![T::from_count(panel.deaths(c)[t]); horizon];
                }
                f
            })
            .collect(),
        PredictorKind::SeparateLinear => {
            let weekday = options.indicators.weekday;
            let width = if weekday {
                LINEAR_WEEKDAY_WINDOW
            } else {
                options.linear_window
            };
            let first = (t + 1).saturating_sub(width);
            let window_flags: Vec<bool> =
                (first..=t).map(|d| is_weekend_report_day(panel, d)).collect();
            let future_flags: Vec<bool> = (1..=horizon)
                .map(|k| is_weekend_report_day(panel, t + k))
                .collect();
            counties
                .into_par_iter()
                .map(|c| {
                    let w = to_real(linear_window(panel.deaths(c), t, width));
                    if weekday {
                        predict_separate_linear_weekday(&w, &window_flags, &future_flags)
                    } else {
                        predict_separate_linear(&w, horizon)
                    }
                })
                .collect()
        }
        PredictorKind::Shared => {
            let m = SharedModel::fit(panel, t, &options.fit)?;
            let divergent = m.fit.is_divergent();
            counties
                .into_par_iter()
                .map(|c| flag_divergent(m.predict_county(panel, c, t, horizon), divergent))
                .collect()
        }
        PredictorKind::DemographicsShared => {
            let table = inputs.demographics.ok_or_else(|| Error::MissingInput {
                input: "demographics",
                required_by: kind.name().to_string(),
            })?;
            let m = DemographicsModel::fit(panel, table, t, &options.fit)?;
            let divergent = m.fit.is_divergent();
            counties
                .into_par_iter()
                .map(|c| flag_divergent(m.predict_county(panel, table, c, t, horizon), divergent))
                .collect()
        }
        PredictorKind::ExpandedShared => {
            require_expanded_inputs(panel, kind.name())?;
            let ind = IndicatorBuilder::new(
                panel,
                t,
                options.indicators,
                inputs.interventions,
                kind.name(),
            )?;
            warnings.extend(ind.warnings.iter().cloned());
            let config = if options.indicators.social_distancing {
                options.fit.clone().with_elastic_net(T::lit(DISTANCING_ELASTIC_NET))
            } else {
                options.fit.clone()
            };
            let models: Vec<ExpandedModel<T>> = (1..=horizon)
                .into_par_iter()
                .map(|k| ExpandedModel::fit(panel, t, k, &ind, &config))
                .collect::<Result<_>>()?;
            counties
                .into_par_iter()
                .map(|c| {
                    let values = models
                        .iter()
                        .map(|m| m.predict_county(panel, c, t, &ind))
                        .collect();
                    flag_divergent(values, models.iter().any(|m| m.fit.is_divergent()))
                })
                .collect()
        }
    };
    Ok((forecasts, warnings))
}

/// Forecasts of the requested predictors with fallbacks resolved and
/// monotonicity enforced.
///
/// A pooled predictor that cannot be fitted for lack of training rows, or
/// whose fit diverges, takes the separate linear forecasts instead, flagged
/// as imputed or divergent. Missing inputs stay fatal.
pub fn forecast_set<T: Scalar>(
    inputs: &PredictorInputs<'_>,
    kinds: &[PredictorKind],
    t: Day,
    horizon: usize,
    options: &PredictorOptions<T>,
) -> Result<ForecastSet<T>> {
    let panel = inputs.panel;
    check_request(panel, t, horizon)?;
    let (linear, _) = forecast_kind(inputs, PredictorKind::SeparateLinear, t, horizon, options)?;
    let last_observed: Vec<T> = (0..panel.n_counties())
        .map(|c| T::from_count(panel.deaths(c)[t]))
        .collect();
    let mut set = ForecastSet {
        as_of: t,
        horizon,
        last_observed,
        predictors: BTreeMap::new(),
        clep: None,
        warnings: Vec::new(),
    };
    for &kind in kinds {
        if set.predictors.contains_key(&kind) {
            continue;
        }
        let mut forecasts = match kind {
            PredictorKind::SeparateLinear => linear.clone(),
            _ => match forecast_kind(inputs, kind, t, horizon, options) {
                Ok((f, w)) => {
                    set.warnings.extend(w);
                    f
                }
                Err(Error::InsufficientPooledData { predictor, rows }) => {
                    let msg = format!(
                        "{predictor}: only {rows} pooled rows at day {t}; imputed from linear"
                    );
                    log::warn!("{msg}");
                    set.warnings.push(msg);
                    linear
                        .iter()
                        .map(|f| CountyForecast {
                            values: f.values.clone(),
                            fallback: Fallback::Imputed,
                        })
                        .collect()
                }
                Err(e) => return Err(e),
            },
        };
        if kind.is_pooled() {
            let mut replaced = 0usize;
            for (f, lin) in forecasts.iter_mut().zip(&linear) {
                if f.fallback == Fallback::Divergent {
                    f.values.clone_from(&lin.values);
                    replaced += 1;
                }
            }
            if replaced > 0 {
                let msg = format!("{kind}: {replaced} divergent forecasts at day {t} replaced by linear");
                log::warn!("{msg}");
                set.warnings.push(msg);
            }
        }
        for (f, &last) in forecasts.iter_mut().zip(&set.last_observed) {
            enforce_monotonicity(&mut f.values, last);
        }
        set.predictors.insert(kind, forecasts);
    }
    Ok(set)
}
