mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};

/// Exit code for a failure, keyed by the core error category.
fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    let Some(core) = err.chain().find_map(|e| e.downcast_ref::<ildae_core::Error>()) else {
        if err.chain().any(|e| e.is::<std::io::Error>()) {
            return (5, "io");
        }
        return (1, "error");
    };
    let category = core.category();
    let code = match category {
        "invalid" => 3,
        "parse" | "duplicate" | "integrity" => 4,
        "io" => 5,
        "missing-predictions" | "alignment" | "manifest" => 6,
        "selection" | "stat" | "degenerate-ranking" => 7,
        "curation" => 8,
        _ => 1,
    };
    (code, category)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Manifest(a) => commands::manifest(a),
        Command::Score(a) => commands::score(a),
        Command::Select(a) => commands::select(a),
        Command::Fidelity(a) => commands::fidelity(a),
        Command::Report { kind } => commands::report(kind),
        Command::Flag(a) => commands::flag(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Serve(a) => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .with_writer(std::io::stderr)
                .init();
            commands::serve(a)
        }
    }
}

fn main() -> ExitCode {
    let argv = match config::layer_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error[config]: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = exit_code(&e);
            eprintln!("error[{category}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
