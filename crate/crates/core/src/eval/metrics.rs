use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Error metrics of one predictor on one target day over the eligible counties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub n_counties: usize,
    pub mape: f64,
    pub raw_mae: f64,
    pub sqrt_mae: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

/// `100 · mean |ŷ − y| / y` over `(prediction, observation)` pairs. Pairs with
/// `y = 0` cannot occur for eligible counties and are rejected by a debug assertion.
pub fn mape<T: Scalar>(pairs: &[(T, T)]) -> Option<f64> {
    mean(pairs.iter().map(|&(p, y)| {
        let (p, y) = (p.as_f64(), y.as_f64());
        debug_assert!(y > 0.0, "percentage error of a zero count");
        (p - y).abs() / y
    }))
    .map(|m| 100.0 * m)
}

/// Mean `|ŷ − y|`.
pub fn raw_mae<T: Scalar>(pairs: &[(T, T)]) -> Option<f64> {
    mean(pairs.iter().map(|&(p, y)| (p.as_f64() - y.as_f64()).abs()))
}

/// Mean `|√ŷ − √y|`.
pub fn sqrt_mae<T: Scalar>(pairs: &[(T, T)]) -> Option<f64> {
    mean(
        pairs
            .iter()
            .map(|&(p, y)| (p.as_f64().max(0.0).sqrt() - y.as_f64().max(0.0).sqrt()).abs()),
    )
}

/// All three metrics; `None` when there are no eligible counties.
pub fn day_metrics<T: Scalar>(pairs: &[(T, T)]) -> Option<DayMetrics> {
    Some(DayMetrics {
        n_counties: pairs.len(),
        mape: mape(pairs)?,
        raw_mae: raw_mae(pairs)?,
        sqrt_mae: sqrt_mae(pairs)?,
    })
}

/// Fraction of `(lower, upper, observed)` triples with the observation inside
/// the closed interval.
pub fn coverage<T: Scalar>(cases: &[(T, T, T)]) -> Option<f64> {
    mean(
        cases
            .iter()
            .map(|&(lo, hi, y)| if lo <= y && y <= hi { 1.0 } else { 0.0 }),
    )
}

/// Mean `(upper − lower) / max(1, y)`.
pub fn normalized_length<T: Scalar>(cases: &[(T, T, T)]) -> Option<f64> {
    mean(
        cases
            .iter()
            .map(|&(lo, hi, y)| (hi.as_f64() - lo.as_f64()) / y.as_f64().max(1.0)),
    )
}

/// Nearest-rank percentile: the value at rank `⌈p/100 · n⌉` (at least 1) of
/// the sorted values.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of an empty series");
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// p10 / median / p90 (nearest rank) and the mean of a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub mean: f64,
}

/// Summary of the finite values of `values`; `None` if there are none.
pub fn summary_percentiles(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        n: v.len(),
        p10: nearest_rank(&v, 10.0),
        median: nearest_rank(&v, 50.0),
        p90: nearest_rank(&v, 90.0),
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}
