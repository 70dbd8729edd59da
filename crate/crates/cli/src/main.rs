mod commands;
mod config;
mod failure;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, RunConfig};
use failure::Failure;

#[derive(Parser)]
#[command(name = "dsample", version, about = "Treatment effects with double-sampled missing outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo study of the estimators.
    Simulate(Flags),
    /// Estimate arm means and the ATE on a dataset CSV.
    Estimate(Flags),
    /// Exact checks on a discrete coarsened-data law.
    Check(Flags),
}

#[derive(clap::Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    /// Parent of the run directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(command: Command, flags: Flags) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&flags.config)?;
    if let Some(out) = flags.out {
        cfg.out = Some(out);
    }
    if let Some(t) = flags.threads {
        cfg.threads = Some(t);
    }
    if let Some(seed) = flags.seed {
        cfg.set_seed(seed);
    }
    cfg.validate(command)?;
    env_logger::Builder::new().parse_filters(&cfg.verbosity).init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    pool.build_global().map_err(|e| Failure::Config(e.to_string()))?;

    let dir = commands::create_run_dir(cfg.out.as_deref().expect("set on load"))?;
    commands::write_metadata(&dir, command.name(), rayon::current_num_threads(), &cfg)?;
    log::info!("writing to {}", dir.display());
    let text = match command {
        Command::Simulate => commands::simulate(cfg.simulate.as_ref().expect("validated"), &dir)?,
        Command::Estimate => commands::estimate(cfg.estimate.as_ref().expect("validated"), &dir)?,
        Command::Check => {
            let (text, passed) = commands::check(cfg.check.as_ref().expect("validated"), &dir)?;
            emit(&text, &dir);
            return if passed {
                Ok(())
            } else {
                Err(Failure::CheckFailed("see check.json".into()))
            };
        }
    };
    emit(&text, &dir);
    Ok(())
}

/// Prints the summary; a closed stdout is not an error.
fn emit(text: &str, dir: &std::path::Path) {
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{text}");
    let _ = writeln!(out, "output: {}", dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Estimate(f) => (Command::Estimate, f),
        Cmd::Check(f) => (Command::Check, f),
    };
    match run(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsample {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
