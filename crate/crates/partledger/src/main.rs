use std::process::ExitCode;

use clap::Parser;
use partledger::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            println!("{}", out.render(cli.json));
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                let j = serde_json::json!({ "error": e.code, "message": e.message });
                eprintln!("{j}");
            } else {
                eprintln!("{e}");
            }
            ExitCode::from(e.exit as u8)
        }
    }
}
