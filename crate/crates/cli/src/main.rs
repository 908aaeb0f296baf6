use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nakagami_qus::experiment::{self, ExperimentConfig, StageReport};
use nakagami_qus::score::EpochReport;
use nakagami_qus::{par, Error, Result};

/// Nakagami parametric imaging experiments.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
/// failure.
#[derive(Parser, Debug)]
#[command(name = "nakagami", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate phantoms and envelope images.
    Simulate(Common),
    /// Train the score model.
    Train(Common),
    /// Compute the configured parameter maps.
    Estimate(Common),
    /// Score the maps against ground truth.
    Evaluate(Common),
    /// simulate, train (if needed), estimate and evaluate in one go.
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML); defaults are used when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "NAKAGAMI_THREADS", default_value_t = 0)]
    threads: usize,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) if !path.exists() => {
                return Err(Error::Config(format!("config file {} not found", path.display())))
            }
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.output {
            cfg.output = Some(out.clone());
        }
        cfg.output_dir()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<StageReport> {
    let (Command::Simulate(c) | Command::Train(c) | Command::Estimate(c) | Command::Evaluate(c) | Command::Compare(c)) =
        &cli.command;
    if c.threads > 0 {
        par::init_threads(c.threads);
    }
    let cfg = c.config()?;
    let quiet = c.quiet;
    let mut progress = |r: &EpochReport| {
        if !quiet {
            eprintln!(
                "epoch {:>3}/{} loss {:.6} delta {:.4} lr {:.2e}",
                r.epoch, r.epochs, r.mean_loss, r.delta, r.learning_rate
            );
        }
    };
    match &cli.command {
        Command::Simulate(_) => experiment::cmd_simulate(&cfg),
        Command::Train(_) => experiment::cmd_train(&cfg, &mut progress),
        Command::Estimate(_) => experiment::cmd_estimate(&cfg),
        Command::Evaluate(_) => experiment::cmd_evaluate(&cfg).map(|(r, _)| r),
        Command::Compare(_) => experiment::cmd_compare(&cfg, &mut progress).map(|(r, _)| r),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            for line in report.lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
