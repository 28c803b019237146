//! Command-line entry point: train / predict / diagnose / gen-poly.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use contraction_rnn::harness::{self, Overrides};

#[derive(Parser)]
#[command(
    name = "crnn",
    about = "Train recurrent networks by damped fixed-point iteration on \
             closed-form first-order conditions, with convergence diagnostics.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonFlags {
    /// Directory for emitted artifacts (overrides the config's output_dir).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Skip SVG plot emission.
    #[arg(long)]
    no_plots: bool,
    /// Print progress and warnings to stderr.
    #[arg(long)]
    verbose: bool,
}

impl CommonFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_dir: self.output_dir.clone(),
            no_plots: self.no_plots,
            verbose: self.verbose,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a full training experiment from a JSON config.
    Train {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Predict on a CSV dataset with a saved weights file.
    Predict {
        weights: PathBuf,
        data: PathBuf,
        out: PathBuf,
    },
    /// Evaluate bounds, convergence thresholds and a sampled contraction
    /// factor without training.
    Diagnose {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Generate the polynomial dataset described by the config's data block.
    GenPoly {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train { config, flags } => harness::run_experiment(config, &flags.overrides()),
        Command::Predict { weights, data, out } => harness::run_predict(weights, data, out),
        Command::Diagnose { config, flags } => harness::run_diagnose(config, &flags.overrides()),
        Command::GenPoly { config, flags } => harness::run_gen_poly(config, &flags.overrides()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::EXIT_ERROR as u8)
        }
    }
}
