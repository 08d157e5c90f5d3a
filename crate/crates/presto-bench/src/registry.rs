//! The shipped dataset table: where each benchmark dataset comes from and
//! the defaults used to run it (interval method, learning rate, classifier
//! count, trial count). Everything here can be overridden from the command
//! line; the values encode the benchmark's standing configuration.

use std::path::{Path, PathBuf};

use presto_core::{ExtendParams, GbdtParams, IntervalMethod, LossConfig, PrestoConfig};

use crate::data::{load_csv, Dataset};
use crate::error::{BenchError, Result};
use crate::synth::{generate, SynthKind};

#[derive(Debug, Clone)]
pub enum DatasetSource {
    /// A CSV under the data directory, produced by scripts/fetch_uci.sh.
    UciFile { file: &'static str },
    Synthetic(SynthKind),
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub id: &'static str,
    pub source: DatasetSource,
    pub target_column: &'static str,
    pub default_trials: usize,
    /// None means: tune max depth on the first trial's train/valid split
    /// over the standard grid.
    pub max_depth: Option<usize>,
    pub presto: PrestoConfig,
}

/// Depth candidates tried when a dataset does not pin max_depth.
pub const DEPTH_GRID: [usize; 4] = [3, 5, 7, 9];

fn rand_quantile() -> IntervalMethod {
    IntervalMethod::RandQuantile {
        num_quantiles: 25,
        extend: Some(ExtendParams {
            lower_quantile: 0.25,
            upper_quantile: 0.75,
            scale: 0.25,
        }),
    }
}

fn structured_loss() -> LossConfig {
    LossConfig::StructuredCe {
        singleton_weight: 0.1,
        block_size: None,
    }
}

fn presto(interval: IntervalMethod, learning_rate: f64, max_trees: usize) -> PrestoConfig {
    PrestoConfig {
        num_classifiers: 10,
        interval,
        gbdt: GbdtParams {
            learning_rate,
            max_trees,
            early_stopping_rounds: Some(25),
            ..GbdtParams::default()
        },
        loss: structured_loss(),
        seed: 0,
    }
}

/// Wine quality scores are integers; half-offset edges center each score in
/// its own bin.
fn wine_grid() -> Vec<f64> {
    vec![2.0, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.0]
}

/// Naval compressor decay takes values .950, .951, ..., 1.0; the grid offsets
/// edges by half a step so observed values sit mid-bin.
fn naval_grid() -> Vec<f64> {
    let mut grid = vec![0.950];
    for i in 0..50 {
        grid.push(0.9505 + 0.001 * i as f64);
    }
    grid.push(1.0);
    grid
}

/// Year-of-release targets are integers 1922..2011.
fn yearmsd_grid() -> Vec<f64> {
    (0..=90).map(|i| 1921.5 + i as f64).collect()
}

pub fn registry() -> Vec<DatasetConfig> {
    vec![
        DatasetConfig {
            id: "boston",
            source: DatasetSource::UciFile { file: "boston.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(rand_quantile(), 0.01, 1000),
        },
        DatasetConfig {
            id: "concrete",
            source: DatasetSource::UciFile {
                file: "concrete.csv",
            },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(rand_quantile(), 0.01, 1000),
        },
        DatasetConfig {
            id: "energy",
            source: DatasetSource::UciFile { file: "energy.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(rand_quantile(), 0.01, 1000),
        },
        DatasetConfig {
            id: "kin8nm",
            source: DatasetSource::UciFile { file: "kin8nm.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(rand_quantile(), 0.05, 600),
        },
        DatasetConfig {
            id: "naval",
            source: DatasetSource::UciFile { file: "naval.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(
                IntervalMethod::FixedRss {
                    grid: naval_grid(),
                    subset_size: 20,
                },
                0.05,
                600,
            ),
        },
        DatasetConfig {
            id: "power",
            source: DatasetSource::UciFile { file: "power.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(rand_quantile(), 0.05, 600),
        },
        DatasetConfig {
            id: "protein",
            source: DatasetSource::UciFile {
                file: "protein.csv",
            },
            target_column: "y",
            default_trials: 5,
            max_depth: None,
            presto: presto(rand_quantile(), 0.07, 600),
        },
        DatasetConfig {
            id: "wine",
            source: DatasetSource::UciFile { file: "wine.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(
                IntervalMethod::Fixed { grid: wine_grid() },
                0.01,
                1000,
            ),
        },
        DatasetConfig {
            id: "yacht",
            source: DatasetSource::UciFile { file: "yacht.csv" },
            target_column: "y",
            default_trials: 20,
            max_depth: None,
            presto: presto(rand_quantile(), 0.01, 1000),
        },
        DatasetConfig {
            id: "yearmsd",
            source: DatasetSource::UciFile {
                file: "yearmsd.csv",
            },
            target_column: "y",
            default_trials: 1,
            max_depth: Some(4),
            presto: PrestoConfig {
                num_classifiers: 1,
                gbdt: GbdtParams {
                    learning_rate: 0.1,
                    max_trees: 300,
                    colsample_per_node: 0.1,
                    early_stopping_rounds: Some(25),
                    ..GbdtParams::default()
                },
                ..presto(
                    IntervalMethod::Fixed {
                        grid: yearmsd_grid(),
                    },
                    0.1,
                    300,
                )
            },
        },
        // Synthetic targets have unbounded tails, so their widened bins use a
        // larger multiple of the interquartile range than the UCI defaults.
        DatasetConfig {
            id: "synth_gauss",
            source: DatasetSource::Synthetic(SynthKind::Gaussian),
            target_column: "y",
            default_trials: 4,
            max_depth: Some(3),
            presto: presto(
                IntervalMethod::RandQuantile {
                    num_quantiles: 25,
                    extend: Some(ExtendParams {
                        lower_quantile: 0.25,
                        upper_quantile: 0.75,
                        scale: 1.0,
                    }),
                },
                0.05,
                200,
            ),
        },
        DatasetConfig {
            id: "synth_linear",
            source: DatasetSource::Synthetic(SynthKind::Linear),
            target_column: "y",
            default_trials: 4,
            max_depth: Some(3),
            presto: presto(
                IntervalMethod::RandQuantile {
                    num_quantiles: 15,
                    extend: Some(ExtendParams {
                        lower_quantile: 0.25,
                        upper_quantile: 0.75,
                        scale: 0.5,
                    }),
                },
                0.05,
                150,
            ),
        },
        DatasetConfig {
            id: "synth_bimodal",
            source: DatasetSource::Synthetic(SynthKind::Bimodal),
            target_column: "y",
            default_trials: 4,
            max_depth: Some(2),
            presto: presto(
                IntervalMethod::RandQuantile {
                    num_quantiles: 25,
                    extend: Some(ExtendParams {
                        lower_quantile: 0.25,
                        upper_quantile: 0.75,
                        scale: 0.5,
                    }),
                },
                0.05,
                100,
            ),
        },
    ]
}

pub fn lookup(id: &str) -> Result<DatasetConfig> {
    registry()
        .into_iter()
        .find(|d| d.id == id)
        .ok_or_else(|| BenchError::UnknownDataset(id.to_string()))
}

/// Load a registered dataset, reading UCI files from `data_dir`.
pub fn load(config: &DatasetConfig, data_dir: &Path) -> Result<Dataset> {
    match &config.source {
        DatasetSource::Synthetic(kind) => Ok(generate(*kind)),
        DatasetSource::UciFile { file } => {
            let path: PathBuf = data_dir.join(file);
            if !path.exists() {
                return Err(BenchError::DatasetFileMissing { path });
            }
            load_csv(&path, config.target_column)
        }
    }
}
