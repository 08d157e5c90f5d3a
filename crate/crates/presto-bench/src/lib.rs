//! Benchmark harness for the coarse-learner probabilistic regressor:
//! dataset ingestion and registry, the split/tune/retrain trial protocol,
//! and the reported metrics.

pub mod data;
pub mod error;
pub mod protocol;
pub mod registry;
pub mod synth;

pub use data::{load_csv, Dataset};
pub use error::{BenchError, Result};
pub use protocol::{
    aggregate, coverage_eval, learning_curve, nll_summary, run_trial, run_trials, split_indices,
    tune_max_depth, variant_comparison, MeanSe, Summary, TrialResult, TrialSpec,
    VariantComparison, COVERAGE_LEVELS,
};
pub use registry::{load, lookup, registry, DatasetConfig, DatasetSource, DEPTH_GRID};
pub use synth::SynthKind;
