//! `hfc`: simulate scenarios, sweep them, design controllers and re-render reports.

mod commands;
mod plots;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;

#[derive(Parser)]
#[command(name = "hfc", version, about = "Hierarchical frequency control of hybrid power plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write timeseries.csv, metrics.txt and plots.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Controller fragment written by `design` (overrides the scenario's).
        #[arg(long)]
        controllers: Option<PathBuf>,
    },
    /// Run the cartesian product of scenario variations and write report.csv.
    Sweep {
        config: PathBuf,
        /// Dimension and values, e.g. `delay=0,0.1,1,2` or `mode=distributed,centralized`.
        #[arg(long = "over", required = true)]
        over: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
        /// Worker threads (default: all cores). Output does not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Tune the PI controllers, select Q and check robust stability.
    Design {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Re-render tables and plots from the CSV files in a directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, controllers } => commands::simulate(&config, &out, controllers.as_deref()),
        Command::Sweep { config, over, out, jobs } => commands::sweep(&config, &over, &out, jobs),
        Command::Design { config, out } => commands::design(&config, &out),
        Command::Report { dir } => commands::report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Divergence(m) | Failure::Design(m) => write!(f, "{m}"),
            Failure::SweepFailed(n) => write!(f, "{n} sweep run(s) failed; see report.csv"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}
