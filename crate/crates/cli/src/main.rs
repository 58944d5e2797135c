mod args;
mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] clep_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON value serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::IngestCheck { inputs } => print_json(&commands::ingest_check(&inputs)?),
        Command::Forecast {
            inputs,
            model,
            as_of,
            horizons,
            out,
        } => {
            let res = commands::forecast(&inputs, &model, as_of.as_deref(), &horizons, &out)?;
            print_json(&serde_json::json!({
                "forecast_rows": res.rows,
                "files": res.files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
            }));
        }
        Command::Backtest {
            inputs,
            model,
            start,
            end,
            horizons,
            eligibility,
            out,
        } => {
            let summary = commands::backtest(&inputs, &model, &start, end.as_deref(), &horizons, eligibility, &out)?;
            print_json(&summary);
        }
        Command::Diagnose {
            inputs,
            model,
            synthetic,
            seed,
            horizons,
            out,
        } => {
            let rows = match (synthetic, &inputs.deaths) {
                (Some(n), _) => commands::diagnose_synthetic(n, seed),
                (None, Some(deaths)) => {
                    let loaded = commands::load(deaths, &inputs.tables)?;
                    commands::diagnose_panel(&loaded, &model, &horizons)?
                }
                (None, None) => return Err(CliError::Usage("diagnose needs --deaths or --synthetic".into())),
            };
            let path = commands::write_diagnostic(&out, &rows)?;
            print_json(&serde_json::json!({
                "file": path.display().to_string(),
                "rows": rows
                    .iter()
                    .map(|(h, n, r)| serde_json::json!({"horizon": h, "n_tuples": n, "average_ranks": r}))
                    .collect::<Vec<_>>(),
            }));
        }
        Command::Severity {
            inputs,
            model,
            hospitals,
            as_of,
            out,
        } => print_json(&commands::severity(&inputs, &model, &hospitals, as_of.as_deref(), &out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
