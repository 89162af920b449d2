use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use circumnav_core::scenario::{
    builtin, builtin_description, compare_estimators, compute_metrics, run_to_dir, write_json,
    LogSet, ScenarioConfig, BUILTIN_NAMES,
};
use circumnav_core::Error;

#[derive(Parser)]
#[command(
    name = "circumnav",
    version,
    about = "Cooperative target circumnavigation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV logs plus metrics.json
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (defaults to the config's output.dir, else runs/<name>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean relative-localization RMSE of each estimator over seeded trials
    CompareEstimators {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 10)]
        trials: u64,
        /// Also write the table to DIR/comparison.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from a run directory
    Metrics {
        run: PathBuf,
        /// Start of the metric window (s)
        #[arg(long, default_value_t = 20.0)]
        window_start: f64,
    },
    /// List builtin scenarios
    ListScenarios,
}

#[derive(Args)]
struct Source {
    /// Scenario TOML file
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Builtin scenario name
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulated duration (s)
    #[arg(long)]
    duration: Option<f64>,
}

impl Source {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => builtin(name).ok_or_else(|| {
                Error::Config(format!(
                    "scenario: unknown builtin `{name}`, expected one of {}",
                    BUILTIN_NAMES.join(", ")
                ))
            })?,
            (None, None) => {
                return Err(Error::Config(
                    "one of --config or --scenario is required".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(d) = self.duration {
            cfg.world.duration = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Schema { .. } => "schema",
        Error::Io(_) => "io",
        Error::EmptyWindow(_) => "empty_window",
        Error::NumericalFailure(_) => "numerical_failure",
        Error::NoAgentsAlive => "no_agents_alive",
        _ => "runtime",
    }
}

fn print_json(value: serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Io(e.to_string()))?;
    write_stdout(&text)
}

fn write_stdout(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { source, out } => {
            let cfg = source.load()?;
            let dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
            let metrics = run_to_dir(&cfg, &dir)?;
            print_json(json!({ "out": dir, "metrics": metrics }))
        }
        Command::CompareEstimators {
            source,
            trials,
            out,
        } => {
            let cfg = source.load()?;
            let table = compare_estimators(&cfg, trials)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("comparison.json"), &table)?;
            }
            print_json(json!(table))
        }
        Command::Metrics { run, window_start } => {
            let logs = LogSet::read(&run)?;
            print_json(json!(compute_metrics(&logs, window_start)?))
        }
        Command::ListScenarios => {
            let lines: Vec<String> = BUILTIN_NAMES
                .iter()
                .map(|name| format!("{name}\t{}", builtin_description(name).unwrap_or_default()))
                .collect();
            write_stdout(&lines.join("\n"))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": error_kind(&e), "message": e.to_string() })
            );
            ExitCode::from(2)
        }
    }
}
