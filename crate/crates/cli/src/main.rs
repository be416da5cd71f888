mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{read_config, resolve, Cli, Command};
use error::{CliError, Result};

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let cfg = config.as_ref();
    match cli.command {
        Command::Generate(a) => commands::generate(resolve(&a, cfg, "generate")?),
        Command::Derive(a) => commands::derive(resolve(&a, cfg, "derive")?),
        Command::Simulate(a) => commands::simulate(resolve(&a, cfg, "simulate")?),
        Command::Compare(a) => commands::compare(resolve(&a, cfg, "compare")?),
        Command::Sweep(a) => commands::sweep(resolve(&a, cfg, "sweep")?),
        Command::Replacement(a) => commands::replacement(resolve(&a, cfg, "replacement")?),
        Command::Serve(a) => commands::serve(resolve(&a, cfg, "serve")?),
        Command::DemoData(a) => commands::demo_data(resolve(&a, cfg, "demo-data")?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run with --help for usage");
            }
            e.exit_code()
        }
    }
}
