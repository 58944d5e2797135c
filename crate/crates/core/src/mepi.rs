//! Prediction intervals from the largest recent normalized forecast error,
//! and the rank diagnostic for exchangeability of those errors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::Day;
use crate::scalar::Scalar;

/// `|y / max(ŷ, 1) − 1|`.
pub fn normalized_error<T: Scalar>(observed: T, predicted: T) -> T {
    (observed / predicted.max(T::one()) - T::one()).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MepiConfig {
    /// Number of recent errors whose maximum sets the width.
    pub window: usize,
    /// Raise the lower bound to the last observed cumulative count.
    pub clamp_to_last: bool,
}

impl Default for MepiConfig {
    fn default() -> Self {
        MepiConfig {
            window: 5,
            clamp_to_last: true,
        }
    }
}

/// Interval for one `(county, target day, horizon)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval<T> {
    pub county: usize,
    pub as_of: Day,
    pub target: Day,
    pub horizon: usize,
    pub lower: T,
    pub upper: T,
    /// Number of past errors used (fewer than the window during warm-up).
    pub n_errors: usize,
    /// False when no past error existed and the interval is degenerate.
    pub usable: bool,
}

impl<T: Scalar> PredictionInterval<T> {
    /// Closed-interval membership.
    pub fn contains(&self, y: T) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn is_warm(&self, window: usize) -> bool {
        self.usable && self.n_errors >= window
    }
}

/// `[ŷ(1 − Δmax), ŷ(1 + Δmax)]` with `Δmax` the largest of `deltas`; the
/// lower end is raised to `last_observed` when `clamp_to_last` is set and
/// never drops below zero. With no deltas the interval collapses to
/// `max(ŷ, last_observed)` and is marked unusable.
pub fn mepi_bounds<T: Scalar>(
    predicted: T,
    deltas: &[T],
    last_observed: T,
    clamp_to_last: bool,
) -> (T, T, bool) {
    if deltas.is_empty() {
        let v = predicted.max(last_observed);
        return (v, v, false);
    }
    let dmax = deltas.iter().copied().fold(T::zero(), T::max);
    let mut lower = (predicted * (T::one() - dmax)).max(T::zero());
    if clamp_to_last {
        lower = lower.max(last_observed);
    }
    let upper = (predicted * (T::one() + dmax)).max(lower);
    (lower, upper, true)
}

/// Normalized errors per `(county, horizon)` keyed by target day. Append-only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorStore<T> {
    errors: HashMap<(usize, usize), BTreeMap<Day, T>>,
}

impl<T: Scalar> ErrorStore<T> {
    pub fn new() -> Self {
        ErrorStore {
            errors: HashMap::new(),
        }
    }

    pub fn record(&mut self, county: usize, horizon: usize, target: Day, delta: T) {
        self.errors
            .entry((county, horizon))
            .or_default()
            .insert(target, delta);
    }

    pub fn get(&self, county: usize, horizon: usize, target: Day) -> Option<T> {
        self.errors.get(&(county, horizon))?.get(&target).copied()
    }

    /// Errors for target days `t − window + 1 ..= t` that exist.
    pub fn recent(&self, county: usize, horizon: usize, t: Day, window: usize) -> Vec<T> {
        let first = (t + 1).saturating_sub(window);
        match self.errors.get(&(county, horizon)) {
            None => Vec::new(),
            Some(m) => m.range(first..=t).map(|(_, &v)| v).collect(),
        }
    }

    pub fn series(&self, county: usize, horizon: usize) -> Option<&BTreeMap<Day, T>> {
        self.errors.get(&(county, horizon))
    }

    /// `(county, horizon)` keys in sorted order.
    pub fn keys(&self) -> Vec<(usize, usize)> {
        let mut k: Vec<_> = self.errors.keys().copied().collect();
        k.sort_unstable();
        k
    }
}

/// Interval for `county`'s forecast `predicted` of day `as_of + horizon`,
/// built from the horizon's errors on target days up to `as_of`.
pub fn mepi_interval<T: Scalar>(
    store: &ErrorStore<T>,
    county: usize,
    as_of: Day,
    horizon: usize,
    predicted: T,
    last_observed: T,
    config: &MepiConfig,
) -> PredictionInterval<T> {
    let deltas = store.recent(county, horizon, as_of, config.window);
    let (lower, upper, usable) = mepi_bounds(predicted, &deltas, last_observed, config.clamp_to_last);
    PredictionInterval {
        county,
        as_of,
        target: as_of + horizon,
        horizon,
        lower,
        upper,
        n_errors: deltas.len(),
        usable,
    }
}

/// Six-tuples `(Δ_{t+k}, Δ_t, Δ_{t−1}, …, Δ_{t−4})` from a series of
/// `k`-ahead errors keyed by target day, for every `t` where all six exist.
pub fn six_tuples<T: Scalar>(series: &BTreeMap<Day, T>, horizon: usize) -> Vec<[T; 6]> {
    let mut out = Vec::new();
    for (&t, &now) in series {
        if t < 4 {
            continue;
        }
        let Some(&future) = series.get(&(t + horizon)) else {
            continue;
        };
        let mut tuple = [future, now, now, now, now, now];
        let mut complete = true;
        for j in 1..5 {
            match series.get(&(t - j)) {
                Some(&v) => tuple[j + 1] = v,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            out.push(tuple);
        }
    }
    out
}

/// Ranks `1..=n` of `values` in increasing order, ties sharing the mean of
/// their positions.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of each slot across tuples; all 3.5 under exchangeability.
/// `None` for an empty input.
pub fn rank_diagnostic<T: Scalar>(tuples: &[[T; 6]]) -> Option<[f64; 6]> {
    if tuples.is_empty() {
        return None;
    }
    let mut sums = [0.0; 6];
    for t in tuples {
        for (s, r) in sums.iter_mut().zip(average_ranks(t)) {
            *s += r;
        }
    }
    Some(sums.map(|s| s / tuples.len() as f64))
}
