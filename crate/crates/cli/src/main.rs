mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::Parser;

use config::{Command, Overrides, RunConfig};

/// Exit status when a check fails.
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_BAD_CONFIG: u8 = 2;
const EXIT_RUN_ERROR: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "nsfem", version, about = "Navier-Stokes mixed finite element solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::resolve(cli.command, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    println!("# nsfem {} {}", nsfem::VERSION, cfg.command.name());
    print!("{}", cfg.to_toml());
    println!();
    let outcome = match commands::dispatch(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(EXIT_RUN_ERROR);
        }
    };
    for c in &outcome.checks {
        println!("[{}] {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    for n in &outcome.notes {
        println!("note: {n}");
    }
    for a in &outcome.artifacts {
        println!("wrote {}", a.display());
    }
    if outcome.pass() {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = outcome.failures().map(|c| c.name.as_str()).collect();
        eprintln!("{} of {} checks failed: {}", failed.len(), outcome.checks.len(), failed.join("; "));
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
