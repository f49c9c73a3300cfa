//! `neuroaudio` command-line driver.
//!
//! Settings resolve as built-in defaults, then `--config FILE.toml`, then
//! flags. Every command that writes files also writes its resolved settings
//! as `<command>.toml` next to them.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, Kind};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Kind::Usage.exit_code() as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "info"
    } else {
        "warn"
    }))
    .format_timestamp(None)
    .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => commands::synth(a, config),
        Command::Train(a) => commands::train(a, config),
        Command::Denoise(a) => commands::denoise(a, config),
        Command::Eval(a) => commands::eval(a, config),
        Command::Perf(a) => commands::perf(a, config),
        Command::Expressivity(a) => commands::expressivity(a, config),
        Command::Stft(a) => commands::stft(a, config),
        Command::Encode(a) => commands::encode(a, config),
    }
}
