use std::process::ExitCode;

use clap::Parser;

/// The error and its causes, dropping causes already spelled out by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    let mut previous = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if !previous.ends_with(&s) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&s);
        }
        previous = s;
    }
    text
}

fn main() -> ExitCode {
    let cli = fosr_cli::Cli::parse();
    match fosr_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
