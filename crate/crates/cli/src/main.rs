use std::process::ExitCode;

use clap::Parser;
use pprx_cli::{execute, Cli};

/// Exit codes: 0 success, 1 hard verification failure or rerun mismatch,
/// 2 usage error, 3 input or runtime error.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(execution) => {
            for line in &execution.lines {
                println!("{line}");
            }
            println!("wrote {}", execution.manifest.output_dir);
            if execution.hard_failures > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
