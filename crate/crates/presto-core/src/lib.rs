//! Nonparametric probabilistic regression with coarse learners.
//!
//! Instead of predicting a point estimate, a model here predicts a full
//! conditional density for the target. It does so by training many
//! multi-class gradient boosted forests, each on a different random
//! discretization of the target range, converting each forest's class
//! probabilities into a piecewise-constant density, and averaging the
//! results. A structured cross-entropy loss that credits probability placed
//! near the true bin regularizes and smooths the base classifiers.
//!
//! The crate is organized bottom-up:
//!
//! - [`density`]: bin partitions and piecewise-constant densities with their
//!   query operations (pdf, cdf, quantile, mean, negative log likelihood).
//! - [`intervals`]: the interval selection methods that carve the target
//!   range into bins, and the discretizer.
//! - [`loss`]: structured cross-entropy over weighted partition sets, with
//!   exact gradients and diagonal hessians for boosting.
//! - [`gbdt`]: the multi-class gradient boosted tree trainer.
//! - [`presto`]: the user-facing fit/predict regressor combining all of the
//!   above, plus [`model_io`] for versioned JSON persistence.

pub mod density;
pub mod error;
pub mod gbdt;
pub mod intervals;
pub mod loss;
pub mod model_io;
pub mod presto;

pub use density::{total_variation, BinPartition, PiecewiseConstantDensity};
pub use error::{PrestoError, Result};
pub use gbdt::{BoostedForest, GbdtConfig, GbdtParams};
pub use intervals::{discretize, discretize_clamped, ExtendParams, IntervalMethod};
pub use loss::{
    softmax, standard_ce, standard_ordinal_partition, structured_ce, structured_ce_grad_hess,
    LossConfig, WeightedPartitionSet,
};
pub use model_io::{model_from_json, model_to_json, MODEL_SCHEMA_VERSION};
pub use presto::{CoarseClassifier, DataSchema, PrestoConfig, PrestoModel, RefitPlan};
