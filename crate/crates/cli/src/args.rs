use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "clep", version, about = "County-level cumulative death forecasting")]
pub struct Cli {
    /// Worker threads for per-county work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and align the inputs and print a JSON summary.
    IngestCheck {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Forecasts, intervals and ensemble weights for one as-of date.
    Forecast {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// As-of date (defaults to the last panel date).
        #[arg(long)]
        as_of: Option<String>,
        /// Forecast horizons 1..=K; a list uses its largest value.
        #[arg(long, value_delimiter = ',', default_value = "14")]
        horizons: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rolling backtest scored on target dates start..=end.
    Backtest {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        start: String,
        /// Defaults to the last panel date.
        #[arg(long)]
        end: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,14")]
        horizons: Vec<usize>,
        /// Minimum cumulative deaths for a county to be scored on a day.
        #[arg(long, default_value_t = 10)]
        eligibility: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Six-tuple rank diagnostic of normalized interval errors.
    Diagnose {
        #[command(flatten)]
        inputs: OptionalInputArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Use N i.i.d. synthetic errors instead of a panel.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,14")]
        horizons: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Hospital severity categories from the as-of forecasts.
    Severity {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        hospitals: PathBuf,
        #[arg(long)]
        as_of: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Debug, Args)]
pub struct InputArgs {
    /// Wide cumulative death CSV.
    #[arg(long)]
    pub deaths: PathBuf,
    #[command(flatten)]
    pub tables: TableArgs,
}

#[derive(Clone, Debug, Args)]
pub struct OptionalInputArgs {
    #[arg(long, required_unless_present = "synthetic")]
    pub deaths: Option<PathBuf>,
    #[command(flatten)]
    pub tables: TableArgs,
}

#[derive(Clone, Debug, Args)]
pub struct TableArgs {
    /// Wide cumulative case CSV.
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// County adjacency CSV.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// County demographics CSV.
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    /// Social-distancing start dates per county.
    #[arg(long)]
    pub interventions: Option<PathBuf>,
    /// Keep non-monotone cumulative series as recorded.
    #[arg(long)]
    pub no_clean: bool,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Ensemble members.
    #[arg(long, value_delimiter = ',', default_value = "expanded_shared,linear")]
    pub ensemble: Vec<String>,
    /// Extra predictors reported alongside the ensemble members.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 7)]
    pub weight_window: usize,
    #[arg(long, default_value_t = 3)]
    pub loss_horizon: usize,
    /// Loss transform: sqrt or log1p.
    #[arg(long, default_value = "sqrt")]
    pub transform: String,
    #[arg(long, default_value_t = 5)]
    pub mepi_window: usize,
    /// Do not raise interval lower bounds to the last observed count.
    #[arg(long)]
    pub unclamped: bool,
    /// Add the Sunday/Monday reporting indicator.
    #[arg(long)]
    pub weekday: bool,
    /// Add the social-distancing indicator (needs --interventions).
    #[arg(long)]
    pub social_distancing: bool,
}
