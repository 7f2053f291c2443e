//! `oodrl` command line: train, retrain, eval, calibrate and plot.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 3 when
//! training diverges numerically, 1 for anything else.

mod commands;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use oodrl_core::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "oodrl", version, about = "Train, break and recover soft actor-critic agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that resolve a run config.
#[derive(Debug, Args)]
struct RunArgs {
    /// Flat key=value config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// point_room or pendulum.
    #[arg(long)]
    env: Option<String>,
    /// Seed to run; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Step budget of the phase being run.
    #[arg(long)]
    steps: Option<u64>,
    /// Root output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from scratch on the training variant.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Retrain a training checkpoint on the retraining variant.
    Retrain {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint file, or a training output directory with one
        /// `seed_<n>` subdirectory per seed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// sero, sero_oc, sac_env or sac_zero; repeat for several.
        #[arg(long = "variant")]
        variants: Vec<String>,
    },
    /// Print returns of a checkpoint in the training and retraining variants.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Restrict to one phase.
        #[arg(long)]
        phase: Option<String>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the own-criterion threshold and write it into a config copy.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Draw learning curves, mean and sample std across seeds, as SVG.
    Plot {
        /// A metrics CSV or a directory of `seed_<n>` runs; one curve each.
        #[arg(long = "runs", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Horizontal reference: a number, or training runs whose final
        /// raw returns are averaged.
        #[arg(long)]
        baseline: Option<String>,
        /// Metrics column to draw.
        #[arg(long, default_value = "zeroed_return")]
        metric: String,
        #[arg(long)]
        title: Option<String>,
        /// Record the generation time in the SVG.
        #[arg(long)]
        timestamp: bool,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
