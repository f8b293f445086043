//! `risklab`: plan, evaluate and learn risk-sensitive policies on tabular
//! models, writing JSON, CSV and SVG artifacts.

#![allow(clippy::needless_range_loop)]

mod commands;
mod config;
mod error;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use risklab::learner::Mode;

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "risklab",
    version,
    about = "Risk-sensitive tabular RL experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a risk-optimal policy and write plan.json and policy.txt.
    Plan(RunArgs),
    /// Run the learner for every (alpha, mode, seed) and write traces.
    Learn(RunArgs),
    /// Score a fixed policy and write eval.json.
    Eval(RunArgs),
    /// Built-in environments.
    Envs {
        #[command(subcommand)]
        action: EnvsAction,
    },
}

#[derive(Subcommand)]
enum EnvsAction {
    /// Print the built-in environments as JSON.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// CVaR levels.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<Mode>>,
}

impl RunArgs {
    fn config(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            seeds: self.seeds.clone(),
            alphas: self.alpha.clone(),
            episodes: self.episodes,
            delta: self.delta,
            eta: self.eta,
            modes: self.mode.clone(),
        });
        Ok(config)
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("RISKLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "RISKLAB_THREADS={value:?} is not a positive integer"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Plan(args) => {
            let report = commands::plan(&args.config()?, &args.out)?;
            println!(
                "planned {}: value {} (scaled {}) -> {}",
                report.env,
                report.value,
                report.value_scaled,
                args.out.join("plan.json").display()
            );
        }
        Command::Learn(args) => {
            commands::learn(&args.config()?, &args.out)?;
            println!(
                "wrote traces and {}",
                args.out.join("summary.json").display()
            );
        }
        Command::Eval(args) => {
            let report = commands::eval(&args.config()?, &args.out)?;
            println!(
                "phi {} (cdf form {}, difference {:e}) -> {}",
                report.phi_quantile,
                report.phi_cdf,
                report.abs_diff,
                args.out.join("eval.json").display()
            );
        }
        Command::Envs {
            action: EnvsAction::List,
        } => {
            let entries = commands::envs_list()?;
            let text = serde_json::to_string_pretty(&entries).expect("entries serialize");
            // A closed pipe (`risklab envs list | head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
