//! `mocca`: simulations, self checks and a generic solve driver.
//!
//! Exit codes are 0 on success, 1 when a self check fails, 2 when every run
//! diverged and 3 for configuration or output errors.

mod check;
mod config;
mod output;
mod sim;
mod solve;

use std::io;
use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mocca::SolveError;

use crate::config::{Loaded, DEFAULT_OUT_DIR};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
    AllDiverged,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::CheckFailed => 1,
            Outcome::AllDiverged => 2,
        }
    }
}

const EXIT_CONFIG: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mocca", version, about = "Nonconvex primal-dual solvers and simulations")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log-TV regression sweep over step sizes and decompositions.
    Sim1,
    /// Errors-in-variables sweep comparing inner-loop rules.
    Sim2,
    /// Solve a user-described composite problem.
    Solve,
    /// Run the built-in self checks.
    Check {
        /// Deliberately break a component to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fault {
    AdjointSign,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sim1 => "sim1",
            Command::Sim2 => "sim2",
            Command::Solve => "solve",
            Command::Check { .. } => "check",
        }
    }
}

/// Output directory: `--out`, then `output.dir` relative to the config
/// file, then `out` in the working directory.
pub fn out_dir(loaded: &Loaded) -> PathBuf {
    match &loaded.config.output.dir {
        Some(d) => loaded.resolve(d),
        None => PathBuf::from(DEFAULT_OUT_DIR),
    }
}

/// A pool sized by `sweep.threads` or the machine, capped by
/// `MOCCA_THREADS` when set.
pub fn thread_pool(requested: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if requested == Some(0) {
        return Err(CliError::Config("sweep.threads must be at least 1".into()));
    }
    let mut n = requested.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    if let Ok(v) = std::env::var("MOCCA_THREADS") {
        let cap: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| CliError::Config(format!("MOCCA_THREADS must be a positive integer, got {v:?}")))?;
        n = n.min(cap);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut loaded = Loaded::from_path(cli.config.as_deref())?;
    let name = cli.command.name();
    if let Some(c) = &loaded.config.command {
        if c != name {
            return Err(CliError::Config(format!(
                "config is for command {c:?} but {name:?} was requested"
            )));
        }
    }
    if let Some(seed) = cli.seed {
        loaded.config.seed = Some(seed);
    }
    if let Some(out) = cli.out {
        // absolute so that it is not re-resolved against the config file
        let out = if out.is_absolute() {
            out
        } else {
            std::env::current_dir()
                .map_err(|e| CliError::Config(format!("cannot read working directory: {e}")))?
                .join(out)
        };
        loaded.config.output.dir = Some(out);
    }
    match cli.command {
        Command::Sim1 => sim::cmd_sim1(&loaded),
        Command::Sim2 => sim::cmd_sim2(&loaded),
        Command::Solve => solve::cmd_solve(&loaded),
        Command::Check { inject_fault } => {
            let faults = check::Faults {
                adjoint_sign: matches!(inject_fault, Some(Fault::AdjointSign)),
            };
            check::cmd_check(faults)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(outcome)) => ExitCode::from(outcome.code()),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(_) => ExitCode::from(EXIT_CONFIG),
    }
}
