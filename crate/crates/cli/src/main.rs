use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use dbb_cli::{apply_overrides, run, Command, ExperimentConfig, Overrides};

/// Discounted Beta-Bernoulli reward estimation experiments.
#[derive(Debug, Parser)]
#[command(name = "dbb", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment config; flags take precedence over its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (CSV, or the report for mc-validate).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Simulator worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Advantage scheme: grpo-point, grpo-dbb, drgrpo-point, drgrpo-dbb.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Discount factor in (0, 1].
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Resume posteriors from a snapshot.
    #[arg(long = "state-in", global = true, value_name = "PATH")]
    state_in: Option<PathBuf>,
    /// Where to write the final posterior snapshot.
    #[arg(long = "state-out", global = true, value_name = "PATH")]
    state_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// MSE versus discount factor at fixed group size.
    SweepLambda,
    /// MSE versus group size at fixed discount factor.
    SweepN,
    /// Monte Carlo check of the closed-form MSE; exit 2 if it fails.
    McValidate,
    /// Toy bandit training run.
    Train,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let command = match cli.command {
        Cmd::SweepLambda => Command::SweepLambda,
        Cmd::SweepN => Command::SweepN,
        Cmd::McValidate => Command::McValidate,
        Cmd::Train => Command::Train,
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
        scheme: cli.scheme,
        lambda: cli.lambda,
        state_in: cli.state_in.clone(),
        state_out: cli.state_out,
    };

    let result = (|| {
        let mut config = match &cli.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        apply_overrides(&mut config, command, &overrides)?;
        run(command, &config, cli.state_in.as_deref())
    })();

    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("dbb {}: {e}", command.name());
            ExitCode::from(1)
        }
    }
}
