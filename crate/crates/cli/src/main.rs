//! `vast`: fit, forecast and analyse additive smooth-transition models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vast_core::Error;

#[derive(Debug, Parser)]
#[command(name = "vast", version, about = "Additive smooth-transition regressions and VARs: fit, simulate, forecast, impulse responses")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (-v) or details (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a model on a panel and write its posterior draws.
    Fit(commands::FitArgs),
    /// Run the synthetic forecasting experiment and write the metric table.
    Simulate(commands::SimulateArgs),
    /// Predictive summaries from a draw file, or a recursive forecast evaluation.
    Forecast(commands::ForecastArgs),
    /// Generalized impulse responses to a recursively identified shock.
    Girf(commands::GirfArgs),
    /// Repeat a recorded run from its manifest.
    Replay(commands::ReplayArgs),
}

/// 2: configuration, 3: data, 4: numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        e if e.is_numerical() => 4,
        Error::Dimension(_) => 3,
        e if e.is_data_error() => 3,
        _ => 1,
    }
}

fn parse(argv: &[String]) -> Cli {
    match Cli::try_parse_from(std::iter::once("vast".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> vast_core::Result<()> {
    if let Some(n) = cli.threads {
        // a replayed run keeps the pool of the outer invocation
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Fit(a) => commands::fit(a, argv),
        Command::Simulate(a) => commands::simulate(a, argv),
        Command::Forecast(a) => commands::forecast(a, argv),
        Command::Girf(a) => commands::girf(a, argv),
        Command::Replay(a) => commands::replay(a),
    }
}

/// Parse and run an argument list (without the program name).
pub(crate) fn run_argv(argv: Vec<String>) -> vast_core::Result<()> {
    let cli = parse(&argv);
    run(cli, argv)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = parse(&argv);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
