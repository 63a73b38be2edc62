use std::path::PathBuf;
use std::process::ExitCode;

use amc_cli::{commands, run, CliError, Command, Overrides, RunConfig};
use clap::Parser;

/// Solver and verification harness for the second boundary value problem
/// of the prescribed affine mean curvature equation on planar domains.
#[derive(Debug, Parser)]
#[command(name = "amc", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format_timestamp(None)
        .init();
    let args = Args::parse();
    let Some(path) = args.config else {
        if args.command == Command::Fixture {
            print!("{}", commands::list_fixtures());
            return ExitCode::SUCCESS;
        }
        return fail(CliError::Invalid("--config is required".into()));
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    let result = RunConfig::load(&path).and_then(|mut config| {
        overrides.apply(&mut config)?;
        run(args.command, &config)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("amc: {e}");
    ExitCode::from(e.exit_code() as u8)
}
