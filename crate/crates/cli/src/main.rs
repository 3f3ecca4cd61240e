//! `rrc`: simulate, fit, select, forecast and diagnose RRC-GARCH count models.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use rrc_garch::parallel::init_threads;
use rrc_garch::{Error, Execution};

use args::{Cli, Command};
use commands::Context;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::NotApplicable(_) => 2,
        Error::Data(_) | Error::Degenerate(_) | Error::Io(_) => 3,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<String, Error> {
    let exec = match cli.threads {
        Some(0) => return Err(Error::Config("--threads must be at least 1".into())),
        Some(1) => Execution::Sequential,
        Some(t) => {
            init_threads(t);
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let ctx = Context { seed: cli.seed, exec, out_dir: cli.out_dir };
    match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(a, &ctx),
        Command::Fit(a) => commands::fit_cmd(a, &ctx),
        Command::Select(a) => commands::select_cmd(a, &ctx),
        Command::Forecast(a) => commands::forecast_cmd(a, &ctx),
        Command::Diagnose(a) => commands::diagnose_cmd(a, &ctx),
        Command::McStudy(a) => commands::mc_study_cmd(a, &ctx),
        Command::Acf(a) => commands::acf_cmd(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    match run(cli) {
        Ok(text) => {
            if !quiet {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
