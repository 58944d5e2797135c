use chrono::{Datelike, Duration, Weekday};

use crate::error::{Error, Result};
use crate::ingest::{CountyPanel, Day, InterventionTable};
use crate::scalar::Scalar;

/// Days between the start of social distancing and the indicator switching on.
pub const DISTANCING_LAG_DAYS: i64 = 14;

/// Optional 0/1 features added to the expanded shared predictor (and, for the
/// weekday flag, to the separate linear predictor).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IndicatorOptions {
    /// 1 when the day being predicted is a Sunday or a Monday.
    pub weekday: bool,
    /// 1 once two weeks have passed since social distancing began in the county.
    pub social_distancing: bool,
}

impl IndicatorOptions {
    pub fn any(self) -> bool {
        self.weekday || self.social_distancing
    }

    pub fn names(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.social_distancing {
            names.push("social_distancing");
        }
        if self.weekday {
            names.push("weekday");
        }
        names
    }
}

/// Whether `day` of the panel falls on a Sunday or a Monday.
pub fn is_weekend_report_day(panel: &CountyPanel, day: Day) -> bool {
    matches!(panel.date_of(day).weekday(), Weekday::Sun | Weekday::Mon)
}

/// Builds indicator rows for `(county, day)` pairs with only the intervention
/// dates known by the end of `as_of`.
#[derive(Clone, Debug)]
pub struct IndicatorBuilder {
    options: IndicatorOptions,
    /// First day the distancing flag is 1, per county; `None` when unknown.
    switch_on: Vec<Option<i64>>,
    pub warnings: Vec<String>,
}

impl IndicatorBuilder {
    pub fn new(
        panel: &CountyPanel,
        as_of: Day,
        options: IndicatorOptions,
        interventions: Option<&InterventionTable>,
        required_by: &str,
    ) -> Result<Self> {
        let mut warnings = Vec::new();
        let mut switch_on = vec![None; panel.n_counties()];
        if options.social_distancing {
            let table = interventions.ok_or_else(|| Error::MissingInput {
                input: "interventions",
                required_by: required_by.to_string(),
            })?;
            let cutoff = panel.date_of(as_of);
            let start = panel.start_date();
            let mut missing = 0usize;
            for (c, id) in panel.counties().iter().enumerate() {
                match table.dates.get(id) {
                    Some(&d) if d <= cutoff => {
                        let on = d + Duration::days(DISTANCING_LAG_DAYS);
                        switch_on[c] = Some((on - start).num_days());
                    }
                    Some(_) => {}
                    None => missing += 1,
                }
            }
            if missing > 0 {
                let msg = format!(
                    "{missing} counties have no intervention date; their distancing flag stays 0"
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        Ok(IndicatorBuilder {
            options,
            switch_on,
            warnings,
        })
    }

    pub fn options(&self) -> IndicatorOptions {
        self.options
    }

    pub fn width(&self) -> usize {
        self.options.names().len()
    }

    pub fn distancing(&self, county: usize, day: Day) -> bool {
        self.switch_on[county].is_some_and(|on| day as i64 >= on)
    }

    /// Indicator values for a prediction of `county`'s count on `day`, in the
    /// order of [`IndicatorOptions::names`].
    pub fn row<T: Scalar>(&self, panel: &CountyPanel, county: usize, day: Day) -> Vec<T> {
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        let mut row = Vec::with_capacity(self.width());
        if self.options.social_distancing {
            row.push(flag(self.distancing(county, day)));
        }
        if self.options.weekday {
            row.push(flag(is_weekend_report_day(panel, day)));
        }
        row
    }
}

/// Appends indicator columns to a pooled design whose rows are the
/// `(county, day)` pairs in `rows`. Returns the design and the passthrough
/// mask (indicators are never standardized).
pub fn augment_indicator_features<T: Scalar>(
    x: &crate::glm::DesignMatrix<T>,
    panel: &CountyPanel,
    rows: &[(usize, Day)],
    builder: &IndicatorBuilder,
) -> Result<(crate::glm::DesignMatrix<T>, Vec<bool>)> {
    let names = builder.options().names();
    let mut mask = vec![false; x.n_cols()];
    if names.is_empty() {
        return Ok((x.clone(), mask));
    }
    let extra: Vec<Vec<T>> = rows
        .iter()
        .map(|&(c, day)| builder.row(panel, c, day))
        .collect();
    mask.extend(std::iter::repeat_n(true, names.len()));
    Ok((x.append_columns(&names, &extra)?, mask))
}
