//! `metacircuit` command-line tool.
//!
//! Every command reads JSON or CSV inputs and writes JSON or CSV artifacts.
//! Exit codes: 0 success, 1 usage, 2 configuration or IO, 3 numeric failure.

mod analysis;
mod dataset;
mod output;
mod run;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use output::{exit_code, UsageError};

#[derive(Parser, Debug)]
#[command(name = "metacircuit", version, about = "Train and analyse resonant metacircuit classifiers")]
struct Cli {
    /// Seed for every stochastic step; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap (1 gives identical results, only slower).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Allow overwriting existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled Gaussian-pulse dataset directory.
    GenDataset(dataset::GenDatasetArgs),
    /// Train a lattice by backpropagation through time.
    Train(train::TrainArgs),
    /// Classify signals with a trained system.
    Classify(run::ClassifyArgs),
    /// Drive a system with a signal and record node voltages.
    Simulate(run::SimulateArgs),
    /// Per-output transmission spectrum, or single-cell analytics.
    #[command(alias = "sweep")]
    AcSweep(analysis::SweepArgs),
    /// Per-cell effective impedance and branch currents at one frequency.
    Landscape(analysis::LandscapeArgs),
    /// Component list with E-series quantized resistor values.
    #[command(alias = "netlist")]
    ExportNetlist(analysis::NetlistArgs),
}

/// Settings shared by all commands.
pub struct Global {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl Global {
    pub fn require_out(&self) -> anyhow::Result<&PathBuf> {
        self.out
            .as_ref()
            .ok_or_else(|| UsageError("this command needs --out".into()).into())
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
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let global = Global {
        seed: cli.seed,
        out: cli.out,
        force: cli.force,
    };
    let result = match cli.command {
        Command::GenDataset(a) => dataset::gen_dataset(&global, a),
        Command::Train(a) => train::train(&global, a),
        Command::Classify(a) => run::classify(&global, a),
        Command::Simulate(a) => run::simulate(&global, a),
        Command::AcSweep(a) => analysis::sweep(&global, a),
        Command::Landscape(a) => analysis::landscape(&global, a),
        Command::ExportNetlist(a) => analysis::netlist(&global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
