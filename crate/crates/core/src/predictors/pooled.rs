use super::indicators::{augment_indicator_features, IndicatorBuilder};
use crate::error::{Error, Result};
use crate::glm::{
    fit_poisson_glm, standardize_with_passthrough, DesignMatrix, FitConfig, GlmFit,
    Standardization,
};
use crate::ingest::{CountyPanel, Day, DemographicsTable, DEMOGRAPHIC_FEATURES};
use crate::scalar::{log1p_count, Scalar};

/// A county enters the pooled training data the day after reaching this many deaths.
pub const POOLING_DEATH_THRESHOLD: u64 = 3;

/// Pooled training rows `(county, s)` for as-of day `t`: response day `s ≤ t`
/// whose lag day `s − 1` is on or after the county's third death, and `s ≥ min_day`.
pub fn pooled_rows(panel: &CountyPanel, t: Day, min_day: Day) -> Vec<(usize, Day)> {
    let mut rows = Vec::new();
    for c in 0..panel.n_counties() {
        let Some(third) = panel.deaths(c)[..=t]
            .iter()
            .position(|&d| d >= POOLING_DEATH_THRESHOLD)
        else {
            continue;
        };
        for s in (third + 1).max(min_day)..=t {
            rows.push((c, s));
        }
    }
    rows
}

fn check_rows(predictor: &str, rows: usize, n_features: usize) -> Result<()> {
    if rows < 2.max(n_features + 1) {
        return Err(Error::InsufficientPooledData {
            predictor: predictor.to_string(),
            rows,
        });
    }
    Ok(())
}

fn responses<T: Scalar>(panel: &CountyPanel, rows: &[(usize, Day)]) -> Vec<T> {
    rows.iter()
        .map(|&(c, s)| T::from_count(panel.deaths(c)[s]))
        .collect()
}

fn log1p<T: Scalar>(v: T) -> T {
    v.max(T::zero()).ln_1p()
}

/// Pooled Poisson model on `log(deaths_{s−1} + 1)`, applied recursively.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedModel<T> {
    pub fit: GlmFit<T>,
    pub standardization: Standardization<T>,
    pub n_rows: usize,
}

impl<T: Scalar> SharedModel<T> {
    pub fn fit(panel: &CountyPanel, t: Day, config: &FitConfig<T>) -> Result<Self> {
        let rows = pooled_rows(panel, t, 1);
        check_rows("shared", rows.len(), 1)?;
        let data = rows
            .iter()
            .map(|&(c, s)| log1p_count(panel.deaths(c)[s - 1]))
            .collect();
        let x = DesignMatrix::new(vec!["log_deaths".into()], data)?;
        let (z, standardization) = standardize_with_passthrough(&x, &[]);
        let fit = fit_poisson_glm(&z, &responses(panel, &rows), config)?;
        Ok(SharedModel {
            fit,
            standardization,
            n_rows: rows.len(),
        })
    }

    /// Predictions for `1..=horizon` days after a day with `last` deaths.
    pub fn predict_from(&self, last: T, horizon: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(horizon);
        let mut prev = last;
        for _ in 0..horizon {
            let z = self.standardization.apply_value(0, log1p(prev));
            prev = self.fit.predict_mean(&[z]);
            out.push(prev);
        }
        out
    }

    pub fn predict_county(&self, panel: &CountyPanel, county: usize, t: Day, horizon: usize) -> Vec<T> {
        self.predict_from(T::from_count(panel.deaths(county)[t]), horizon)
    }
}

/// Pooled Poisson model on log deaths plus the static demographic features.
#[derive(Clone, Debug, PartialEq)]
pub struct DemographicsModel<T> {
    pub fit: GlmFit<T>,
    /// Fitted over the pooled matrix: column 0 is log deaths, then the eight
    /// demographic features.
    pub standardization: Standardization<T>,
    pub n_rows: usize,
}

fn demographic_row<T: Scalar>(table: &DemographicsTable, panel: &CountyPanel, c: usize) -> [T; 8] {
    table.features_for(panel.county(c)).map(T::lit)
}

impl<T: Scalar> DemographicsModel<T> {
    pub fn fit(
        panel: &CountyPanel,
        demographics: &DemographicsTable,
        t: Day,
        config: &FitConfig<T>,
    ) -> Result<Self> {
        let rows = pooled_rows(panel, t, 1);
        check_rows("demographics_shared", rows.len(), 1 + DEMOGRAPHIC_FEATURES.len())?;
        let mut names = vec!["log_deaths"];
        names.extend(DEMOGRAPHIC_FEATURES);
        let matrix: Vec<[T; 9]> = rows
            .iter()
            .map(|&(c, s)| {
                let d = demographic_row::<T>(demographics, panel, c);
                let mut r = [T::zero(); 9];
                r[0] = log1p_count(panel.deaths(c)[s - 1]);
                r[1..].copy_from_slice(&d);
                r
            })
            .collect();
        let x = DesignMatrix::from_rows(&names, &matrix)?;
        let (z, standardization) = standardize_with_passthrough(&x, &[]);
        let fit = fit_poisson_glm(&z, &responses(panel, &rows), config)?;
        Ok(DemographicsModel {
            fit,
            standardization,
            n_rows: rows.len(),
        })
    }

    /// Predictions for `1..=horizon` days for a county with raw demographic
    /// features `features` whose last observed count is `last`.
    pub fn predict_from(&self, last: T, features: &[T; 8], horizon: usize) -> Vec<T> {
        let mut row = [T::zero(); 9];
        for (j, &f) in features.iter().enumerate() {
            row[j + 1] = self.standardization.apply_value(j + 1, f);
        }
        let mut out = Vec::with_capacity(horizon);
        let mut prev = last;
        for _ in 0..horizon {
            row[0] = self.standardization.apply_value(0, log1p(prev));
            prev = self.fit.predict_mean(&row);
            out.push(prev);
        }
        out
    }

    pub fn predict_county(
        &self,
        panel: &CountyPanel,
        demographics: &DemographicsTable,
        county: usize,
        t: Day,
        horizon: usize,
    ) -> Vec<T> {
        let feats = demographic_row(demographics, panel, county);
        self.predict_from(T::from_count(panel.deaths(county)[t]), &feats, horizon)
    }
}

/// Names of the expanded model's dynamic features, before any indicators.
pub const EXPANDED_FEATURES: [&str; 4] = ["log_deaths", "log_cases", "log_neigh_deaths", "log_neigh_cases"];

/// Pooled Poisson model for one horizon `k`, with case and neighbour features
/// lagged so that only information up to `t − k + 1` enters a `k`-step forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedModel<T> {
    pub horizon: usize,
    pub fit: GlmFit<T>,
    pub standardization: Standardization<T>,
    pub n_rows: usize,
}

fn aux_features<T: Scalar>(panel: &CountyPanel, c: usize, day: Day) -> [T; 3] {
    [
        log1p_count(panel.cases(c)[day]),
        log1p_count(panel.neigh_deaths(c)[day]),
        log1p_count(panel.neigh_cases(c)[day]),
    ]
}

/// Fails unless the panel carries case counts and neighbour aggregates.
pub fn require_expanded_inputs(panel: &CountyPanel, required_by: &str) -> Result<()> {
    if !panel.has_cases() {
        return Err(Error::MissingInput {
            input: "cases",
            required_by: required_by.to_string(),
        });
    }
    if !panel.has_neighbors() {
        return Err(Error::MissingInput {
            input: "adjacency",
            required_by: required_by.to_string(),
        });
    }
    Ok(())
}

impl<T: Scalar> ExpandedModel<T> {
    pub fn fit(
        panel: &CountyPanel,
        t: Day,
        horizon: usize,
        indicators: &IndicatorBuilder,
        config: &FitConfig<T>,
    ) -> Result<Self> {
        assert!(horizon >= 1, "horizon starts at 1");
        require_expanded_inputs(panel, "expanded_shared")?;
        let rows = pooled_rows(panel, t, horizon.max(1));
        check_rows("expanded_shared", rows.len(), 4 + indicators.width())?;
        let matrix: Vec<[T; 4]> = rows
            .iter()
            .map(|&(c, s)| {
                let [a, b, d] = aux_features(panel, c, s - horizon);
                [log1p_count(panel.deaths(c)[s - 1]), a, b, d]
            })
            .collect();
        let base = DesignMatrix::from_rows(&EXPANDED_FEATURES, &matrix)?;
        let (x, mask) = augment_indicator_features(&base, panel, &rows, indicators)?;
        let (z, standardization) = standardize_with_passthrough(&x, &mask);
        let fit = fit_poisson_glm(&z, &responses(panel, &rows), config)?;
        Ok(ExpandedModel {
            horizon,
            fit,
            standardization,
            n_rows: rows.len(),
        })
    }

    /// The recursion's intermediate predictions for days `t+1..=t+k`; the last
    /// entry is this model's `k`-day-ahead forecast.
    pub fn predict_path(
        &self,
        panel: &CountyPanel,
        county: usize,
        t: Day,
        indicators: &IndicatorBuilder,
    ) -> Vec<T> {
        let k = self.horizon;
        let mut out = Vec::with_capacity(k);
        let mut prev = T::from_count(panel.deaths(county)[t]);
        for j in 0..k {
            // case and neighbour features advance along recorded values only
            let aux_day = (t + 1 + j).saturating_sub(k);
            let [a, b, d] = aux_features::<T>(panel, county, aux_day);
            let mut raw = vec![log1p(prev), a, b, d];
            raw.extend(indicators.row::<T>(panel, county, t + 1 + j));
            let z = self.standardization.apply_row(&raw);
            prev = self.fit.predict_mean(&z);
            out.push(prev);
        }
        out
    }

    pub fn predict_county(
        &self,
        panel: &CountyPanel,
        county: usize,
        t: Day,
        indicators: &IndicatorBuilder,
    ) -> T {
        *self
            .predict_path(panel, county, t, indicators)
            .last()
            .expect("horizon ≥ 1")
    }
}
