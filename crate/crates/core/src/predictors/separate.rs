use super::{CountyForecast, Fallback};
use crate::glm::{fit_ols, fit_poisson_glm, DesignMatrix, FitConfig};
use crate::ingest::Day;
use crate::scalar::Scalar;

/// Trailing days used by the separate exponential predictor.
pub const EXPONENTIAL_WINDOW: usize = 5;
/// Fewer window days than this falls back to the last observed value.
pub const EXPONENTIAL_MIN_DAYS: usize = 3;
/// Trailing days used by the separate linear predictor.
pub const LINEAR_WINDOW: usize = 4;
/// Trailing days used by the linear predictor when the weekday flag is on.
pub const LINEAR_WEEKDAY_WINDOW: usize = 7;

/// The exponential predictor's training window for as-of day `t`: the last
/// `window` days, trimmed to start no earlier than the first death.
pub fn exponential_window(deaths: &[u64], t: Day, window: usize) -> &[u64] {
    let history = &deaths[..=t];
    match history.iter().position(|&d| d > 0) {
        None => &[],
        Some(first) => &history[first.max((t + 1).saturating_sub(window))..],
    }
}

/// The linear predictor's training window for as-of day `t`.
pub fn linear_window(deaths: &[u64], t: Day, window: usize) -> &[u64] {
    &deaths[(t + 1).saturating_sub(window)..=t]
}

fn flat<T: Scalar>(last: T, horizon: usize, fallback: Fallback) -> CountyForecast<T> {
    CountyForecast {
        values: vec![last; horizon],
        fallback,
    }
}

/// Day offsets `-(n-1), …, 0` of a window ending on the as-of day.
fn offsets<T: Scalar>(n: usize) -> DesignMatrix<T> {
    let data = (0..n).map(|i| T::from_len(i) - T::from_len(n - 1)).collect();
    DesignMatrix::new(vec!["day".into()], data).expect("finite offsets")
}

/// Poisson fit of the window on time, extrapolated `1..=horizon` days past the
/// last window day. Short or constant windows repeat the last value.
pub fn predict_separate_exponential<T: Scalar>(
    window: &[T],
    horizon: usize,
    config: &FitConfig<T>,
) -> CountyForecast<T> {
    let last = window.last().copied().unwrap_or_else(T::zero);
    if window.len() < EXPONENTIAL_MIN_DAYS {
        return flat(last, horizon, Fallback::InsufficientData);
    }
    if window.iter().all(|&v| v == window[0]) {
        return flat(last, horizon, Fallback::ConstantWindow);
    }
    let fit = match fit_poisson_glm(&offsets(window.len()), window, config) {
        Ok(fit) if !fit.is_divergent() => fit,
        _ => return flat(last, horizon, Fallback::Divergent),
    };
    let values: Vec<T> = (1..=horizon)
        .map(|k| (fit.intercept + fit.coefficients[0] * T::from_len(k)).exp())
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return flat(last, horizon, Fallback::Divergent);
    }
    CountyForecast {
        values,
        fallback: Fallback::None,
    }
}

/// Least-squares line through the window, extrapolated `1..=horizon` days past
/// the last window day. Raw values may be negative or decreasing.
pub fn predict_separate_linear<T: Scalar>(window: &[T], horizon: usize) -> CountyForecast<T> {
    let last = window.last().copied().unwrap_or_else(T::zero);
    if window.len() < 2 {
        return flat(last, horizon, Fallback::InsufficientData);
    }
    let fit = fit_ols(&offsets(window.len()), window).expect("window is a valid design");
    CountyForecast {
        values: (1..=horizon)
            .map(|k| fit.predict(&[T::from_len(k)]))
            .collect(),
        fallback: Fallback::None,
    }
}

/// Linear predictor with an extra Sunday/Monday indicator. `window_flags`
/// marks the window days, `future_flags[k-1]` the day `k` steps ahead. A flag
/// that never varies over the window carries no information and is dropped.
pub fn predict_separate_linear_weekday<T: Scalar>(
    window: &[T],
    window_flags: &[bool],
    future_flags: &[bool],
) -> CountyForecast<T> {
    let horizon = future_flags.len();
    assert_eq!(window.len(), window_flags.len());
    if window.len() < 3 || window_flags.iter().all(|&f| f == window_flags[0]) {
        return predict_separate_linear(window, horizon);
    }
    let n = window.len();
    let flag = |b: bool| if b { T::one() } else { T::zero() };
    let rows: Vec<[T; 2]> = (0..n)
        .map(|i| [T::from_len(i) - T::from_len(n - 1), flag(window_flags[i])])
        .collect();
    let x = DesignMatrix::from_rows(&["day", "weekday"], &rows).expect("finite design");
    let fit = fit_ols(&x, window).expect("window is a valid design");
    CountyForecast {
        values: future_flags
            .iter()
            .enumerate()
            .map(|(i, &f)| fit.predict(&[T::from_len(i + 1), flag(f)]))
            .collect(),
        fallback: Fallback::None,
    }
}
