pub mod clep;
pub mod error;
pub mod eval;
pub mod glm;
pub mod ingest;
pub mod mepi;
pub mod predictors;
pub mod scalar;
pub mod severity;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ForecastSetF64 = predictors::ForecastSet<f64>;
pub type IssuedF64 = eval::Issued<f64>;
pub type EngineConfigF64 = eval::EngineConfig<f64>;
pub type BacktestConfigF64 = eval::BacktestConfig<f64>;
pub type PredictionIntervalF64 = mepi::PredictionInterval<f64>;
