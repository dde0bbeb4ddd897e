use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = ppgbp_cli::Cli::parse();
    match ppgbp_cli::run(cli) {
        Ok(warnings) if warnings.is_empty() => ExitCode::SUCCESS,
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
