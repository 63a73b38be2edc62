//! Command-line driver for `amc-core`: configuration, subcommands, reports.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use amc_core::Error;

pub use config::RunConfig;

/// Exit status of a run.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    Nonconvergence(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 3,
            CliError::Nonconvergence(_) => 2,
            CliError::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_invalid_input() {
            CliError::Invalid(e.to_string())
        } else if e.is_solver_failure() {
            CliError::Nonconvergence(e.to_string())
        } else {
            CliError::Other(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Ma,
    Lma,
    Sections,
    Verify,
    Converge,
    Fixture,
}

/// Command line overrides on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        config.validate()
    }
}

/// Runs `command` on `config` inside a pool of `config.threads` workers.
pub fn run(command: Command, config: &RunConfig) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&config.out)?;
    pool.install(|| match command {
        Command::Solve => commands::solve(config),
        Command::Ma => commands::ma(config),
        Command::Lma => commands::lma(config),
        Command::Sections => commands::sections(config),
        Command::Verify => commands::verify(config),
        Command::Converge => commands::converge(config),
        Command::Fixture => commands::fixture(config),
    })
}
