//! Command-line front end of `odeup`: argument parsing, configuration
//! merging, and tidy CSV/JSON rendering.

mod args;
mod commands;
mod config;
mod table;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::Path;

use clap::Parser;
use tempfile::NamedTempFile;

pub use args::Cli;
use args::Command;
pub use commands::Rendered;
use config::FileConfig;
pub use table::format_number;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit code 2.
    Usage(String),
    /// Numerical or I/O failure: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<odeup::Error> for CliError {
    fn from(e: odeup::Error) -> Self {
        use odeup::Error::*;
        match e {
            UnknownProblem(_)
            | UnsupportedRule { .. }
            | UnsupportedOrder { .. }
            | OrderOutOfRange { .. }
            | DimensionTooLarge { .. }
            | InvalidConfig(_)
            | NonPositiveStep(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Runs the parsed command and returns its rendered output without writing it.
pub fn execute(cli: &Cli) -> Result<Rendered, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config::jobs(cli.jobs, &file))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Propagate(a) => commands::propagate(a, &file),
        Command::Reference(a) => commands::reference(a, &file),
        Command::Sweep(a) => commands::sweep(a, &file),
        Command::DemoFig1(a) => commands::demo_fig1(a, &file),
        Command::ListProblems(a) => commands::list_problems(a),
    })
}

/// Parses `argv` (program name first) and runs it; parse failures are usage errors.
pub fn execute_args<I, T>(argv: I) -> Result<Rendered, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(&cli)
}

/// Writes through a temporary file in the target directory, so a failed run
/// never leaves partial output behind.
pub fn emit(out: Rendered) -> Result<(), CliError> {
    match out.path {
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(out.content.as_bytes())?;
            stdout.flush()?;
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = NamedTempFile::new_in(dir)?;
            tmp.write_all(out.content.as_bytes())?;
            tmp.persist(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}
