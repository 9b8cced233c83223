//! Command-line front end: WAV and mask I/O, configuration, and the
//! `enhance`, `equiv-check` and `bench` subcommands.

pub mod commands;
pub mod error;
pub mod io;
pub mod settings;

use commands::Status;
use error::{CliError, CliResult};
use settings::{Cli, Command};

/// Caps the worker pool from `CONVBF_THREADS`.
pub fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("CONVBF_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CONVBF_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

pub fn execute(cli: &Cli) -> CliResult<Status> {
    init_threads()?;
    match &cli.command {
        Command::Enhance(a) => commands::enhance(a),
        Command::EquivCheck(a) => commands::equiv_check(a),
        Command::Bench(a) => commands::bench(a),
    }
}
