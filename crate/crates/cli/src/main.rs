use std::process::ExitCode;

use clap::Parser;
use convbf_cli::settings::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match convbf_cli::execute(&cli) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.exit_code())
        }
    }
}
