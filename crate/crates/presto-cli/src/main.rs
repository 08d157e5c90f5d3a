//! Command-line interface around the coarse-learner probabilistic regressor.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal failure.

mod commands;
mod config;
mod errors;
mod iofs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use commands::bench::BenchArgs;
use commands::predict::PredictMode;
use errors::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "presto",
    version,
    about = "Probabilistic regression: predict full conditional densities by averaging coarse multi-class boosted forests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a CSV file described by a JSON config.
    Fit {
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// Apply a saved model to new rows.
    #[command(group(
        ArgGroup::new("mode")
            .required(true)
            .args(["density", "mean", "interval", "nll"]),
    ))]
    Predict {
        /// Path to a model.json written by fit.
        #[arg(long)]
        model: PathBuf,
        /// Input CSV; feature columns are matched by name.
        #[arg(long)]
        input: PathBuf,
        /// Emit each row's predicted density as a JSON line {edges, heights}.
        #[arg(long)]
        density: bool,
        /// Emit each row's density mean as CSV.
        #[arg(long)]
        mean: bool,
        /// Emit a central prediction interval at this coverage as CSV lo,hi.
        #[arg(long, value_name = "LEVEL")]
        interval: Option<f64>,
        /// Emit per-row negative log likelihood (input must carry the target
        /// column) and print the mean.
        #[arg(long)]
        nll: bool,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the benchmark protocol on a registered dataset.
    Bench {
        /// Dataset id from the registry.
        #[arg(long)]
        dataset: Option<String>,
        /// List registered datasets and exit.
        #[arg(long)]
        list: bool,
        /// Number of trials (defaults to the dataset's registry entry).
        #[arg(long)]
        trials: Option<usize>,
        /// Base seed; trial i runs with seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fix max depth instead of tuning it on the first trial.
        #[arg(long)]
        depth: Option<usize>,
        /// Loss variant to train.
        #[arg(long, value_enum, default_value_t = commands::bench::Variant::Structured)]
        variant: commands::bench::Variant,
        /// Also write each test row's predicted density to a JSON-lines file.
        #[arg(long)]
        dump_densities: bool,
        /// Directory holding fetched dataset CSVs.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Output directory (PRESTO_OUT_DIR overrides).
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Fit once with this many classifiers and emit NLL as a function of
        /// how many are averaged.
        #[arg(long, value_name = "M")]
        learning_curve: Option<usize>,
        /// Run both loss variants on identical splits and report the paired
        /// comparison.
        #[arg(long)]
        compare_variants: bool,
        /// Reuse tuning-time partitions in the retrain instead of redrawing
        /// them from the combined fold.
        #[arg(long)]
        freeze_partitions: bool,
        /// Override the number of classifiers.
        #[arg(long, value_name = "M")]
        num_classifiers: Option<usize>,
        /// Override the boosting round cap.
        #[arg(long)]
        max_trees: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config } => commands::fit::run(&config),
        Command::Predict {
            model,
            input,
            density,
            mean,
            interval,
            nll,
            output,
        } => {
            let mode = if density {
                PredictMode::Density
            } else if mean {
                PredictMode::Mean
            } else if let Some(level) = interval {
                PredictMode::Interval(level)
            } else if nll {
                PredictMode::Nll
            } else {
                return Err(CliError::Usage(
                    "one of --density, --mean, --interval, --nll is required".into(),
                ));
            };
            commands::predict::run(&model, &input, mode, output)
        }
        Command::Bench {
            dataset,
            list,
            trials,
            seed,
            depth,
            variant,
            dump_densities,
            data_dir,
            out_dir,
            learning_curve,
            compare_variants,
            freeze_partitions,
            num_classifiers,
            max_trees,
        } => commands::bench::run(&BenchArgs {
            dataset,
            list,
            trials,
            seed,
            depth,
            variant,
            dump_densities,
            data_dir,
            out_dir,
            learning_curve,
            compare_variants,
            freeze_partitions,
            num_classifiers,
            max_trees,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
