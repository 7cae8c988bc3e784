//! `coalesce`: simulate and analyse game-driven coalescence.
//!
//! Exit codes: 0 success, 1 a statistical gate failed, 2 usage or I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Experiment};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "coalesce", version, about = "Coalescence of rational agents via repeated 2x2 games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo trials and write per-trial summaries.
    Simulate(Common),
    /// Write the theoretical law of the coalescence time.
    Theory(Common),
    /// Compare simulated (or supplied) coalescence times with theory.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Existing trials.csv to compare instead of simulating.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Scan the cost ratio c and check the mean coalescence time grows with it.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated c values, overriding sweep.c_values.
        #[arg(long, value_delimiter = ',')]
        c_values: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials, overriding trials (and sweep.trials for sweep).
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory, overriding output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Total-variation threshold, overriding threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Worker threads (0 = all cores), overriding workers.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(&self.config)
            .map_err(|e| CliError::Usage(format!("{}: {e}", self.config.display())))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = Some(seed);
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
            cfg.sweep_trials = trials;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(threshold) = self.threshold {
            cfg.threshold = threshold;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => commands::simulate(&Experiment::prepare(common.load()?)?),
        Command::Theory(common) => commands::theory(&Experiment::prepare(common.load()?)?),
        Command::Compare { common, summary } => {
            commands::compare_cmd(&Experiment::prepare(common.load()?)?, summary.as_deref())
        }
        Command::Sweep { common, c_values } => {
            let exp = Experiment::prepare(common.load()?)?;
            let c_values = c_values.unwrap_or_else(|| exp.cfg.sweep_c_values.clone());
            commands::sweep(&exp, &c_values, exp.cfg.sweep_trials)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COALESCE_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
