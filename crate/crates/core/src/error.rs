use std::path::PathBuf;

/// Errors raised by the forecasting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV in {context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("invalid header in {context}: {reason}")]
    Header { context: String, reason: String },

    #[error("non-contiguous dates in {context}: {prev} is followed by {next}")]
    NonContiguousDates {
        context: String,
        prev: chrono::NaiveDate,
        next: chrono::NaiveDate,
    },

    #[error("malformed county FIPS code {0:?}")]
    MalformedFips(String),

    #[error("no usable county rows in {0}")]
    EmptyInput(String),

    #[error("death and case series share no dates")]
    DisjointDates,

    #[error("day offset {day} outside panel of {n_days} days")]
    DayOutOfRange { day: usize, n_days: usize },

    #[error("invalid design matrix: {0}")]
    InvalidDesign(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("insufficient pooled data: {rows} training rows for {predictor}")]
    InsufficientPooledData { predictor: String, rows: usize },

    #[error("missing input {input}, required by {required_by}")]
    MissingInput {
        input: &'static str,
        required_by: String,
    },

    #[error("insufficient warm-up: {0}")]
    InsufficientWarmUp(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to serialize {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Header { .. } => "header",
            Error::NonContiguousDates { .. } => "non_contiguous_dates",
            Error::MalformedFips(_) => "malformed_fips",
            Error::EmptyInput(_) => "empty_input",
            Error::DisjointDates => "disjoint_dates",
            Error::DayOutOfRange { .. } => "day_out_of_range",
            Error::InvalidDesign(_) => "invalid_design",
            Error::Dimension(_) => "dimension",
            Error::InvalidResponse(_) => "invalid_response",
            Error::InsufficientPooledData { .. } => "insufficient_pooled_data",
            Error::MissingInput { .. } => "missing_input",
            Error::InsufficientWarmUp(_) => "insufficient_warm_up",
            Error::Config(_) => "config",
            Error::Json { .. } => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
