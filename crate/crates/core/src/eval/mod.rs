//! Rolling forecasting engine, backtest harness, error metrics and report writers.

mod backtest;
mod engine;
mod metrics;
pub mod report;

pub use backtest::{
    run_backtest, run_backtest_with, BacktestConfig, BacktestReport, DailyMetricRow, IntervalStat,
    IntervalSummaries, MetricSummaries, TrajectoryRow, CLEP_NAME,
};
pub use engine::{forecast_as_of, EngineConfig, Issued, RollingEngine};
pub use metrics::{
    coverage, day_metrics, mape, nearest_rank, normalized_length, raw_mae, sqrt_mae, summary_percentiles,
    DayMetrics, Summary,
};
