//! The probabilistic regressor: many coarse multi-class forests, each on its
//! own random bin partition of the target, averaged into one predicted
//! density per row.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{BinPartition, PiecewiseConstantDensity};
use crate::error::{PrestoError, Result};
use crate::gbdt::{self, BoostedForest, GbdtConfig, GbdtParams};
use crate::intervals::{discretize, discretize_clamped, ExtendParams, IntervalMethod};
use crate::loss::LossConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrestoConfig {
    /// Number of coarse classifiers to train and average.
    pub num_classifiers: usize,
    pub interval: IntervalMethod,
    pub gbdt: GbdtParams,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for PrestoConfig {
    fn default() -> Self {
        Self {
            num_classifiers: 10,
            interval: IntervalMethod::RandQuantile {
                num_quantiles: 25,
                extend: Some(ExtendParams {
                    lower_quantile: 0.25,
                    upper_quantile: 0.75,
                    scale: 0.25,
                }),
            },
            gbdt: GbdtParams::default(),
            loss: LossConfig::StructuredCe {
                singleton_weight: 0.1,
                block_size: None,
            },
            seed: 0,
        }
    }
}

impl PrestoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classifiers < 1 {
            return Err(PrestoError::NoClassifiers);
        }
        self.interval.validate()?;
        self.gbdt.validate()
    }
}

/// One trained coarse learner: a bin partition over the target range and a
/// forest predicting a probability per bin.
#[derive(Debug, Clone)]
pub struct CoarseClassifier {
    partition: BinPartition,
    forest: BoostedForest,
}

impl CoarseClassifier {
    pub fn new(partition: BinPartition, forest: BoostedForest) -> Result<Self> {
        if forest.num_classes() != partition.num_bins() {
            return Err(PrestoError::BadModel(format!(
                "forest has {} classes but the partition has {} bins",
                forest.num_classes(),
                partition.num_bins()
            )));
        }
        Ok(Self { partition, forest })
    }

    pub fn partition(&self) -> &BinPartition {
        &self.partition
    }

    pub fn forest(&self) -> &BoostedForest {
        &self.forest
    }
}

/// Tree counts (and optionally partitions) carried from a tuning fit into a
/// retrain on combined data.
#[derive(Debug, Clone)]
pub struct RefitPlan {
    pub rounds: Vec<usize>,
    /// When present, reuse these partitions instead of redrawing from the
    /// retrain fold's quantiles.
    pub partitions: Option<Vec<BinPartition>>,
}

/// Names of the training columns, kept with the model so file-based callers
/// can match schemas by name rather than position alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub feature_names: Vec<String>,
    pub target_column: String,
}

#[derive(Debug, Clone)]
pub struct PrestoModel {
    config: PrestoConfig,
    n_features: usize,
    classifiers: Vec<CoarseClassifier>,
    schema: Option<DataSchema>,
}

impl PrestoModel {
    /// Train `num_classifiers` coarse learners. Each classifier `i` draws its
    /// partition from an independent stream seeded `seed + i`, discretizes
    /// the target (validation labels use the same partition), and fits a
    /// boosted forest with the configured loss.
    pub fn fit(
        features: &[f64],
        n_features: usize,
        targets: &[f64],
        valid: Option<(&[f64], &[f64])>,
        config: &PrestoConfig,
    ) -> Result<Self> {
        Self::fit_inner(features, n_features, targets, valid, config, None)
    }

    /// Refit on (typically) combined train+validation data with tree counts
    /// fixed by a previous tuning fit.
    pub fn refit(
        features: &[f64],
        n_features: usize,
        targets: &[f64],
        config: &PrestoConfig,
        plan: &RefitPlan,
    ) -> Result<Self> {
        if plan.rounds.len() != config.num_classifiers
            || plan
                .partitions
                .as_ref()
                .is_some_and(|p| p.len() != config.num_classifiers)
        {
            return Err(PrestoError::BadModel(
                "refit plan does not match the classifier count".into(),
            ));
        }
        Self::fit_inner(features, n_features, targets, None, config, Some(plan))
    }

    fn fit_inner(
        features: &[f64],
        n_features: usize,
        targets: &[f64],
        valid: Option<(&[f64], &[f64])>,
        config: &PrestoConfig,
        plan: Option<&RefitPlan>,
    ) -> Result<Self> {
        config.validate()?;
        if targets.is_empty() {
            return Err(PrestoError::EmptyTrainingData);
        }
        if n_features == 0 || !features.len().is_multiple_of(n_features) {
            return Err(PrestoError::RaggedMatrix {
                actual: features.len(),
                n_features,
            });
        }
        if features.len() / n_features != targets.len() {
            return Err(PrestoError::RowCountMismatch {
                rows: features.len() / n_features,
                labels: targets.len(),
            });
        }
        for (row, &y) in targets.iter().enumerate() {
            if !y.is_finite() {
                return Err(PrestoError::NonFiniteTarget { row, value: y });
            }
        }
        if let Some((_, vy)) = valid {
            if let Some((row, &y)) = vy.iter().enumerate().find(|(_, y)| !y.is_finite()) {
                return Err(PrestoError::NonFiniteTarget { row, value: y });
            }
        }

        // With a deterministic partition draw and no column sampling, every
        // classifier sees identical inputs and randomness, so the m fits are
        // bit-identical; one fit covers all slots.
        let classifiers = if Self::classifiers_are_identical(config, plan) {
            let first =
                Self::fit_classifier(features, n_features, targets, valid, config, plan, 0)
                    .map_err(|e| e.for_classifier(0))?;
            vec![first; config.num_classifiers]
        } else {
            let fits: Vec<Result<CoarseClassifier>> = (0..config.num_classifiers)
                .into_par_iter()
                .map(|index| {
                    Self::fit_classifier(features, n_features, targets, valid, config, plan, index)
                        .map_err(|e| e.for_classifier(index))
                })
                .collect();
            let mut classifiers = Vec::with_capacity(fits.len());
            for fit in fits {
                classifiers.push(fit?);
            }
            classifiers
        };
        Ok(Self {
            config: config.clone(),
            n_features,
            classifiers,
            schema: None,
        })
    }

    fn classifiers_are_identical(config: &PrestoConfig, plan: Option<&RefitPlan>) -> bool {
        if config.num_classifiers <= 1 || config.gbdt.colsample_per_node < 1.0 {
            return false;
        }
        let partitions_identical = match plan.and_then(|p| p.partitions.as_ref()) {
            Some(frozen) => frozen.windows(2).all(|w| w[0] == w[1]),
            None => matches!(config.interval, IntervalMethod::Fixed { .. }),
        };
        let rounds_identical = plan.is_none_or(|p| p.rounds.windows(2).all(|w| w[0] == w[1]));
        partitions_identical && rounds_identical
    }

    fn fit_classifier(
        features: &[f64],
        n_features: usize,
        targets: &[f64],
        valid: Option<(&[f64], &[f64])>,
        config: &PrestoConfig,
        plan: Option<&RefitPlan>,
        index: usize,
    ) -> Result<CoarseClassifier> {
        let stream_seed = config.seed.wrapping_add(index as u64);
        let partition = match plan.and_then(|p| p.partitions.as_ref()) {
            Some(frozen) => frozen[index].clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
                config.interval.generate(targets, &mut rng)?
            }
        };
        let labels = discretize(targets, &partition)?;
        // Validation extremes can fall past a partition drawn from training
        // targets alone; they are labeled with the nearest outer bin.
        let valid_data = valid.map(|(vf, vy)| (vf, discretize_clamped(vy, &partition)));

        let mut params = config.gbdt.clone();
        let forced_rounds = plan.map(|p| p.rounds[index]);
        if let Some(rounds) = forced_rounds {
            params.max_trees = rounds.max(1);
            params.early_stopping_rounds = None;
        }
        let gbdt_config = GbdtConfig {
            num_classes: partition.num_bins(),
            params,
            loss: config.loss.clone(),
            seed: stream_seed,
        };
        let mut forest = match valid_data {
            Some((vf, ref vl)) => {
                gbdt::fit(features, n_features, &labels, Some((vf, vl)), &gbdt_config)?
            }
            None => gbdt::fit(features, n_features, &labels, None, &gbdt_config)?,
        };
        if forced_rounds == Some(0) {
            forest.truncate_rounds(0);
        }
        CoarseClassifier::new(partition, forest)
    }

    /// Capture the tuned per-classifier tree counts (and optionally the drawn
    /// partitions) for a retrain on combined data.
    pub fn refit_plan(&self, freeze_partitions: bool) -> RefitPlan {
        RefitPlan {
            rounds: self
                .classifiers
                .iter()
                .map(|c| c.forest.kept_rounds())
                .collect(),
            partitions: freeze_partitions.then(|| {
                self.classifiers
                    .iter()
                    .map(|c| c.partition.clone())
                    .collect()
            }),
        }
    }

    pub fn config(&self) -> &PrestoConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn classifiers(&self) -> &[CoarseClassifier] {
        &self.classifiers
    }

    /// Rebuild a model from stored parts, validating consistency.
    pub fn from_parts(
        config: PrestoConfig,
        n_features: usize,
        classifiers: Vec<CoarseClassifier>,
    ) -> Result<Self> {
        if classifiers.is_empty() {
            return Err(PrestoError::NoClassifiers);
        }
        if classifiers
            .iter()
            .any(|c| c.forest.num_features() != n_features)
        {
            return Err(PrestoError::BadModel(
                "classifier feature counts disagree with the model".into(),
            ));
        }
        Ok(Self {
            config,
            n_features,
            classifiers,
            schema: None,
        })
    }

    /// Attach the training column names for schema checks on later input.
    pub fn with_schema(mut self, schema: DataSchema) -> Self {
        self.schema = Some(schema);
        self
    }

    pub fn schema(&self) -> Option<&DataSchema> {
        self.schema.as_ref()
    }

    /// Predict one averaged density per row.
    pub fn predict_density(
        &self,
        features: &[f64],
        n_features: usize,
    ) -> Result<Vec<PiecewiseConstantDensity>> {
        let per_forest: Vec<Vec<Vec<f64>>> = self
            .classifiers
            .iter()
            .map(|c| c.forest.predict_proba(features, n_features))
            .collect::<Result<_>>()?;
        let n_rows = per_forest.first().map_or(0, |p| p.len());
        (0..n_rows)
            .into_par_iter()
            .map(|row| {
                let singles: Vec<PiecewiseConstantDensity> = self
                    .classifiers
                    .iter()
                    .zip(&per_forest)
                    .map(|(c, probs)| {
                        PiecewiseConstantDensity::from_probabilities(
                            &probs[row],
                            c.partition.clone(),
                        )
                    })
                    .collect::<Result<_>>()?;
                PiecewiseConstantDensity::average(&singles)
            })
            .collect()
    }

    /// Point estimates: the mean of each predicted density.
    pub fn point_estimates(&self, features: &[f64], n_features: usize) -> Result<Vec<f64>> {
        Ok(self
            .predict_density(features, n_features)?
            .iter()
            .map(PiecewiseConstantDensity::mean)
            .collect())
    }

    /// Central prediction intervals at the given coverage: the `alpha/2` and
    /// `1 - alpha/2` quantiles of each predicted density.
    pub fn intervals(
        &self,
        features: &[f64],
        n_features: usize,
        coverage: f64,
    ) -> Result<Vec<(f64, f64)>> {
        if !(coverage > 0.0 && coverage < 1.0) {
            return Err(PrestoError::BadCoverage(coverage));
        }
        let alpha = 1.0 - coverage;
        self.predict_density(features, n_features)?
            .iter()
            .map(|d| Ok((d.quantile(alpha / 2.0)?, d.quantile(1.0 - alpha / 2.0)?)))
            .collect()
    }
}
