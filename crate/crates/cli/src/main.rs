// SPDX-License-Identifier: MIT OR Apache-2.0

use std::process::ExitCode;

use cbmw_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
