//! Ensemble of point predictors with weights driven by exponentially decayed
//! recent losses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Day;
use crate::predictors::{enforce_monotonicity, CountyForecast, Fallback, ForecastSet, PredictorKind};
use crate::scalar::Scalar;

/// Transform applied to predictions and observations before taking the
/// absolute loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTransform {
    #[default]
    Sqrt,
    Log1p,
}

impl LossTransform {
    pub fn apply<T: Scalar>(self, v: T) -> T {
        let v = v.max(T::zero());
        match self {
            LossTransform::Sqrt => v.sqrt(),
            LossTransform::Log1p => v.ln_1p(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossTransform::Sqrt => "sqrt",
            LossTransform::Log1p => "log1p",
        }
    }
}

impl fmt::Display for LossTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sqrt" => Ok(LossTransform::Sqrt),
            "log1p" | "log" => Ok(LossTransform::Log1p),
            other => Err(Error::Config(format!("unknown loss transform {other:?}"))),
        }
    }
}

/// `ℓ(ŷ, y) = |g(ŷ) − g(y)|` for the transform `g`.
pub fn loss<T: Scalar>(prediction: T, observed: T, transform: LossTransform) -> T {
    (transform.apply(prediction) - transform.apply(observed)).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    /// Sharpness `c > 0`.
    pub c: f64,
    /// Decay `µ ∈ (0, 1)`.
    pub mu: f64,
    /// Number of recent loss days entering the weights.
    pub window: usize,
    /// Horizon of the predictions whose losses drive the weights.
    pub loss_horizon: usize,
    pub transform: LossTransform,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            c: 1.0,
            mu: 0.5,
            window: 7,
            loss_horizon: 3,
            transform: LossTransform::Sqrt,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Config(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        if self.window == 0 || self.loss_horizon == 0 {
            return Err(Error::Config("window and loss horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Days of history needed before the first full loss window: the first
    /// loss needs a `loss_horizon`-ahead forecast, then `window` loss days.
    pub fn warm_up_days(&self) -> usize {
        self.loss_horizon + self.window - 1
    }
}

/// Loss of each predictor's `loss_horizon`-ahead forecast, per county and
/// target day. Append-only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory<T> {
    losses: HashMap<(usize, PredictorKind), BTreeMap<Day, T>>,
}

impl<T: Scalar> LossHistory<T> {
    pub fn new() -> Self {
        LossHistory {
            losses: HashMap::new(),
        }
    }

    /// Records the loss of `kind`'s forecast for `county` on `day`.
    pub fn record(&mut self, county: usize, kind: PredictorKind, day: Day, loss: T) {
        debug_assert!(!(loss < T::zero()), "losses are non-negative");
        self.losses
            .entry((county, kind))
            .or_default()
            .insert(day, loss);
    }

    pub fn get(&self, county: usize, kind: PredictorKind, day: Day) -> Option<T> {
        self.losses.get(&(county, kind))?.get(&day).copied()
    }

    /// Losses for days `t − window + 1 ..= t`, oldest first; `None` where missing.
    pub fn window(&self, county: usize, kind: PredictorKind, t: Day, window: usize) -> Vec<Option<T>> {
        let first = (t + 1).saturating_sub(window);
        let pad = window - (t + 1 - first);
        let mut out = vec![None; pad];
        out.extend((first..=t).map(|d| self.get(county, kind, d)));
        out
    }

    pub fn len(&self) -> usize {
        self.losses.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `−c(1−µ) Σ µ^{t−i} ℓᵢ` over one predictor's window (oldest first, the last
/// entry being day `t`). Missing days contribute nothing.
pub fn weight_exponent<T: Scalar>(losses: &[Option<T>], config: &WeightConfig) -> T {
    let mu = T::lit(config.mu);
    let mut decay = T::one();
    let mut sum = T::zero();
    for l in losses.iter().rev() {
        if let Some(l) = l {
            sum = sum + decay * *l;
        }
        decay = decay * mu;
    }
    -T::lit(config.c) * (T::one() - mu) * sum
}

/// Normalised `exp(eᵢ)` computed after subtracting the largest exponent.
/// Returns uniform weights (and `false`) when no exponent is finite.
pub fn softmax<T: Scalar>(exponents: &[T]) -> (Vec<T>, bool) {
    let n = exponents.len();
    let max = exponents
        .iter()
        .copied()
        .filter(|e| e.is_finite())
        .fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return (vec![T::one() / T::from_len(n.max(1)); n], false);
    }
    let raw: Vec<T> = exponents
        .iter()
        .map(|&e| if e.is_nan() { T::zero() } else { (e - max).exp() })
        .collect();
    let total: T = raw.iter().copied().sum();
    (raw.into_iter().map(|w| w / total).collect(), true)
}

/// Ensemble weights from per-predictor loss windows (oldest first).
pub fn clep_weights_from_losses<T: Scalar>(losses: &[Vec<Option<T>>], config: &WeightConfig) -> Vec<T> {
    let exps: Vec<T> = losses.iter().map(|l| weight_exponent(l, config)).collect();
    let (w, ok) = softmax(&exps);
    if !ok {
        log::warn!("no finite weight exponent; using uniform weights");
    }
    w
}

/// Weights of `members` for forecasts issued with data through day `t`,
/// using losses on days `t − window + 1 ..= t`. Also returns the number of
/// missing loss entries, which count as zero loss.
pub fn clep_weights<T: Scalar>(
    history: &LossHistory<T>,
    county: usize,
    members: &[PredictorKind],
    t: Day,
    config: &WeightConfig,
) -> (Vec<T>, usize) {
    let windows: Vec<Vec<Option<T>>> = members
        .iter()
        .map(|&m| history.window(county, m, t, config.window))
        .collect();
    let missing = windows.iter().flatten().filter(|l| l.is_none()).count();
    if missing > 0 {
        log::debug!("county {county} day {t}: {missing} missing loss entries treated as zero");
    }
    (clep_weights_from_losses(&windows, config), missing)
}

/// Weighted average of the members' forecasts for one county. Members with
/// no forecast (`None`) are left out and the remaining weights renormalised.
pub fn clep_predict<T: Scalar>(forecasts: &[Option<&[T]>], weights: &[T]) -> Result<Vec<T>> {
    if forecasts.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} forecasts for {} weights",
            forecasts.len(),
            weights.len()
        )));
    }
    let present: Vec<(&[T], T)> = forecasts
        .iter()
        .zip(weights)
        .filter_map(|(f, &w)| f.map(|f| (f, w)))
        .collect();
    let Some((first, _)) = present.first() else {
        return Err(Error::Config("no member forecasts to combine".into()));
    };
    let horizon = first.len();
    if present.iter().any(|(f, _)| f.len() != horizon) {
        return Err(Error::Dimension("member forecasts of different horizons".into()));
    }
    let total: T = present.iter().map(|(_, w)| *w).sum();
    if present.len() < forecasts.len() {
        log::warn!("combining {} of {} members; weights renormalised", present.len(), forecasts.len());
    }
    let uniform = !(total > T::zero());
    let n = T::from_len(present.len());
    Ok((0..horizon)
        .map(|k| {
            present.iter().fold(T::zero(), |acc, (f, w)| {
                let w = if uniform { T::one() / n } else { *w / total };
                acc + w * f[k]
            })
        })
        .collect())
}

/// Per-county weights and combined forecasts for a forecast set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClepOutput<T> {
    pub members: Vec<PredictorKind>,
    /// `weights[c][m]` for county `c` and member `m`.
    pub weights: Vec<Vec<T>>,
    pub missing_losses: usize,
}

/// Fills `set.clep` from its member forecasts and the loss history. The
/// combined forecasts are again made monotone (a no-op for monotone members
/// up to rounding).
pub fn apply_clep<T: Scalar>(
    set: &mut ForecastSet<T>,
    history: &LossHistory<T>,
    members: &[PredictorKind],
    config: &WeightConfig,
) -> Result<ClepOutput<T>> {
    for m in members {
        if !set.predictors.contains_key(m) {
            return Err(Error::Config(format!("ensemble member {m} was not forecast")));
        }
    }
    let n_counties = set.last_observed.len();
    let mut weights = Vec::with_capacity(n_counties);
    let mut combined = Vec::with_capacity(n_counties);
    let mut missing_losses = 0;
    for c in 0..n_counties {
        let (w, missing) = clep_weights(history, c, members, set.as_of, config);
        missing_losses += missing;
        let member_values: Vec<Option<&[T]>> = members
            .iter()
            .map(|m| Some(set.predictors[m][c].values.as_slice()))
            .collect();
        let mut values = clep_predict(&member_values, &w)?;
        enforce_monotonicity(&mut values, set.last_observed[c]);
        let fallback = if members
            .iter()
            .any(|m| set.predictors[m][c].fallback == Fallback::Imputed)
        {
            Fallback::Imputed
        } else {
            Fallback::None
        };
        combined.push(CountyForecast { values, fallback });
        weights.push(w);
    }
    set.clep = Some(combined);
    Ok(ClepOutput {
        members: members.to_vec(),
        weights,
        missing_losses,
    })
}
