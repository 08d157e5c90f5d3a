//! Multi-class gradient boosted decision trees with pluggable loss.
//!
//! Training follows standard second-order boosting: each round computes
//! per-row gradients and diagonal hessians of the configured loss at the
//! current scores, fits one regression tree per class, and steps the scores
//! by the learning-rate-scaled leaf values. Validation loss is tracked each
//! round and the forest keeps the round count that minimized it.

mod binning;
mod tree;

pub use binning::{BinnedMatrix, MAX_BINS, MISSING_BIN};
pub use tree::{grow_tree, grow_tree_with, GrowParams, GrowWorkspace, Node, Tree, HESSIAN_FLOOR};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PrestoError, Result};
use crate::loss::{
    softmax_into, standard_ce, standard_grad_hess_into, structured_ce, structured_grad_hess_into,
    LossConfig, WeightedPartitionSet,
};

/// Probabilities are clipped here inside training-loss evaluation so that a
/// confidently wrong validation row cannot poison early stopping with inf.
const TRAIN_PROB_CLIP: f64 = 1e-15;

/// Tree-growth hyperparameters, shared by every classifier in an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_trees: usize,
    pub early_stopping_rounds: Option<usize>,
    pub min_samples_leaf: usize,
    pub colsample_per_node: f64,
    pub lambda: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_depth: 5,
            max_trees: 500,
            early_stopping_rounds: Some(25),
            min_samples_leaf: 5,
            colsample_per_node: 1.0,
            lambda: 1.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.max_depth < 1 {
            problems.push("max_depth must be at least 1".into());
        }
        if self.max_trees < 1 {
            problems.push("max_trees must be at least 1".into());
        }
        if self.min_samples_leaf < 1 {
            problems.push("min_samples_leaf must be at least 1".into());
        }
        if !(self.colsample_per_node > 0.0 && self.colsample_per_node <= 1.0) {
            problems.push(format!(
                "colsample_per_node {} must lie in (0, 1]",
                self.colsample_per_node
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            problems.push(format!("lambda {} must be nonnegative", self.lambda));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PrestoError::BadGbdtConfig(problems.join("; ")))
        }
    }
}

/// Full configuration for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub num_classes: usize,
    pub params: GbdtParams,
    pub loss: LossConfig,
    pub seed: u64,
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 {
            return Err(PrestoError::BadGbdtConfig(
                "num_classes must be at least 1".into(),
            ));
        }
        self.params.validate()
    }
}

enum LossEval<'a> {
    Standard,
    Structured(&'a WeightedPartitionSet),
}

impl LossEval<'_> {
    fn loss_row(&self, probs: &[f64], label: usize) -> f64 {
        match self {
            LossEval::Standard => -probs[label].max(TRAIN_PROB_CLIP).ln(),
            LossEval::Structured(wps) => {
                let mut total = 0.0;
                for (partition, &w) in wps.partitions().iter().zip(wps.weights()) {
                    let block_prob: f64 = partition
                        .block_containing(label)
                        .iter()
                        .map(|&c| probs[c])
                        .sum();
                    total += w * -block_prob.max(TRAIN_PROB_CLIP).ln();
                }
                total
            }
        }
    }

    fn grad_hess_row(&self, probs: &[f64], label: usize, grad: &mut [f64], hess: &mut [f64]) {
        match self {
            LossEval::Standard => standard_grad_hess_into(probs, label, grad, hess),
            LossEval::Structured(wps) => structured_grad_hess_into(probs, label, wps, grad, hess),
        }
    }
}

/// A trained multi-class boosted forest: class log-prior base scores plus
/// `kept_rounds` rounds of one tree per class.
#[derive(Debug, Clone)]
pub struct BoostedForest {
    num_classes: usize,
    num_features: usize,
    base_scores: Vec<f64>,
    rounds: Vec<Vec<Tree>>,
    train_loss: Vec<f64>,
    valid_loss: Vec<f64>,
}

impl BoostedForest {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn base_scores(&self) -> &[f64] {
        &self.base_scores
    }

    pub fn rounds(&self) -> &[Vec<Tree>] {
        &self.rounds
    }

    /// Boosting rounds kept after early stopping.
    pub fn kept_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Drop rounds beyond `n`, e.g. to honor a tuned tree count of zero.
    pub fn truncate_rounds(&mut self, n: usize) {
        self.rounds.truncate(n);
    }

    /// Mean training loss per round boundary; entry 0 is the prior-only model.
    pub fn train_loss_history(&self) -> &[f64] {
        &self.train_loss
    }

    /// Mean validation loss per round boundary (empty without a validation fold).
    pub fn valid_loss_history(&self) -> &[f64] {
        &self.valid_loss
    }

    /// Assemble a forest from parts, validating shape. Used by model loading.
    pub fn from_parts(
        num_classes: usize,
        num_features: usize,
        base_scores: Vec<f64>,
        rounds: Vec<Vec<Tree>>,
    ) -> Result<Self> {
        if num_classes == 0 || base_scores.len() != num_classes {
            return Err(PrestoError::BadModel(format!(
                "{} base scores for {num_classes} classes",
                base_scores.len()
            )));
        }
        if rounds.iter().any(|r| r.len() != num_classes) {
            return Err(PrestoError::BadModel(
                "every round must hold one tree per class".into(),
            ));
        }
        Ok(Self {
            num_classes,
            num_features,
            base_scores,
            rounds,
            train_loss: Vec::new(),
            valid_loss: Vec::new(),
        })
    }

    fn scores_for_row(&self, row: &[f64]) -> Vec<f64> {
        let mut scores = self.base_scores.clone();
        for round in &self.rounds {
            for (class, tree) in round.iter().enumerate() {
                scores[class] += tree.predict_row(row);
            }
        }
        scores
    }

    /// Class probabilities for each row of `features` (row-major).
    pub fn predict_proba(&self, features: &[f64], n_features: usize) -> Result<Vec<Vec<f64>>> {
        if n_features != self.num_features {
            return Err(PrestoError::FeatureCountMismatch {
                expected: self.num_features,
                actual: n_features,
            });
        }
        if n_features == 0 || !features.len().is_multiple_of(n_features) {
            return Err(PrestoError::RaggedMatrix {
                actual: features.len(),
                n_features,
            });
        }
        let rows: Vec<&[f64]> = features.chunks(n_features).collect();
        Ok(rows
            .par_iter()
            .map(|row| {
                let scores = self.scores_for_row(row);
                let mut probs = vec![0.0; self.num_classes];
                softmax_into(&scores, &mut probs);
                probs
            })
            .collect())
    }

    /// Mean loss of this forest on a labeled set, using its configured loss.
    pub fn mean_loss(&self, features: &[f64], labels: &[usize], loss: &LossConfig) -> Result<f64> {
        let probs = self.predict_proba(features, self.num_features)?;
        let wps = loss.build_partition_set(self.num_classes)?;
        let total: f64 = probs
            .iter()
            .zip(labels)
            .map(|(p, &label)| match &wps {
                None => standard_ce(p, label),
                Some(w) => structured_ce(p, label, w),
            })
            .sum();
        Ok(total / labels.len().max(1) as f64)
    }
}

/// Train a boosted forest. `valid` supplies the early-stopping fold; without
/// it (or without `early_stopping_rounds`) all `max_trees` rounds are kept.
pub fn fit(
    features: &[f64],
    n_features: usize,
    labels: &[usize],
    valid: Option<(&[f64], &[usize])>,
    config: &GbdtConfig,
) -> Result<BoostedForest> {
    config.validate()?;
    let k = config.num_classes;
    let binned = BinnedMatrix::build(features, n_features)?;
    let n_rows = binned.n_rows;
    if n_rows == 0 {
        return Err(PrestoError::EmptyTrainingData);
    }
    if labels.len() != n_rows {
        return Err(PrestoError::RowCountMismatch {
            rows: n_rows,
            labels: labels.len(),
        });
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(PrestoError::LabelOutOfRange {
                label,
                num_classes: k,
                row,
            });
        }
    }
    let (valid_features, valid_labels) = match valid {
        Some((vf, vl)) => {
            if n_features == 0 || !vf.len().is_multiple_of(n_features) {
                return Err(PrestoError::RaggedMatrix {
                    actual: vf.len(),
                    n_features,
                });
            }
            if vf.len() / n_features != vl.len() {
                return Err(PrestoError::RowCountMismatch {
                    rows: vf.len() / n_features,
                    labels: vl.len(),
                });
            }
            (vf, vl)
        }
        None => (&[][..], &[][..]),
    };
    let n_valid = valid_labels.len();

    let wps = config.loss.build_partition_set(k)?;
    let loss_eval = match &wps {
        None => LossEval::Standard,
        Some(w) => LossEval::Structured(w),
    };

    // Smoothed class log-priors keep never-observed bins (for example the
    // widened outer bins) at small but nonzero probability.
    let mut counts = vec![0usize; k];
    for &label in labels {
        counts[label] += 1;
    }
    let base_scores: Vec<f64> = counts
        .iter()
        .map(|&c| (((c + 1) as f64) / ((n_rows + k) as f64)).ln())
        .collect();

    let mut scores: Vec<f64> = Vec::with_capacity(n_rows * k);
    for _ in 0..n_rows {
        scores.extend_from_slice(&base_scores);
    }
    let mut valid_scores: Vec<f64> = Vec::with_capacity(n_valid * k);
    for _ in 0..n_valid {
        valid_scores.extend_from_slice(&base_scores);
    }

    let mut probs = vec![0.0; n_rows * k];
    let mut grad = vec![0.0; n_rows * k];
    let mut hess = vec![0.0; n_rows * k];
    let mut row_loss = vec![0.0; n_rows];
    let mut valid_probs = vec![0.0; n_valid * k];
    let mut valid_row_loss = vec![0.0; n_valid];

    let mut rounds: Vec<Vec<Tree>> = Vec::new();
    let mut train_loss = Vec::new();
    let mut valid_loss = Vec::new();

    let eval_train = |scores: &[f64],
                          probs: &mut [f64],
                          row_loss: &mut [f64],
                          grad: &mut [f64],
                          hess: &mut [f64]| {
        probs
            .par_chunks_mut(k)
            .zip(grad.par_chunks_mut(k))
            .zip(hess.par_chunks_mut(k))
            .zip(row_loss.par_iter_mut())
            .enumerate()
            .for_each(|(row, (((p, g), h), loss_out))| {
                softmax_into(&scores[row * k..(row + 1) * k], p);
                *loss_out = loss_eval.loss_row(p, labels[row]);
                loss_eval.grad_hess_row(p, labels[row], g, h);
            });
        row_loss.iter().sum::<f64>() / n_rows as f64
    };

    let eval_valid = |scores: &[f64], probs: &mut [f64], row_loss: &mut [f64]| -> f64 {
        probs
            .par_chunks_mut(k)
            .zip(row_loss.par_iter_mut())
            .enumerate()
            .for_each(|(row, (p, loss_out))| {
                softmax_into(&scores[row * k..(row + 1) * k], p);
                *loss_out = loss_eval.loss_row(p, valid_labels[row]);
            });
        if n_valid == 0 {
            0.0
        } else {
            row_loss.iter().sum::<f64>() / n_valid as f64
        }
    };

    train_loss.push(eval_train(
        &scores,
        &mut probs,
        &mut row_loss,
        &mut grad,
        &mut hess,
    ));
    let stopping = config.params.early_stopping_rounds.filter(|_| n_valid > 0);
    let mut best_round = 0usize;
    let mut best_valid = f64::INFINITY;
    let mut since_improvement = 0usize;
    if n_valid > 0 {
        let v0 = eval_valid(&valid_scores, &mut valid_probs, &mut valid_row_loss);
        valid_loss.push(v0);
        best_valid = v0;
    }

    let valid_rows: Vec<&[f64]> = valid_features.chunks(n_features.max(1)).collect();

    for round in 0..config.params.max_trees {
        // One tree per class on this round's gradient statistics; workers
        // keep reusable growth buffers across trees.
        let class_fits: Vec<(Tree, Vec<f64>)> = (0..k)
            .into_par_iter()
            .map_init(
                || (GrowWorkspace::new(), Vec::new(), Vec::new(), Vec::new()),
                |(workspace, g, h, deltas), class| {
                    g.clear();
                    g.extend((0..n_rows).map(|r| grad[r * k + class]));
                    h.clear();
                    h.extend((0..n_rows).map(|r| hess[r * k + class]));
                    deltas.clear();
                    deltas.resize(n_rows, 0.0);
                    let params = GrowParams {
                        max_depth: config.params.max_depth,
                        min_samples_leaf: config.params.min_samples_leaf,
                        lambda: config.params.lambda,
                        leaf_scale: config.params.learning_rate,
                        colsample_per_node: config.params.colsample_per_node,
                        column_seed: mix(config.seed, (round * k + class) as u64),
                    };
                    let tree = grow_tree_with(workspace, &binned, g, h, &params, deltas);
                    (tree, std::mem::take(deltas))
                },
            )
            .collect();

        let mut round_trees = Vec::with_capacity(k);
        for (class, (tree, deltas)) in class_fits.into_iter().enumerate() {
            for (row, &delta) in deltas.iter().enumerate() {
                scores[row * k + class] += delta;
            }
            round_trees.push(tree);
        }
        if n_valid > 0 {
            valid_scores
                .par_chunks_mut(k)
                .zip(valid_rows.par_iter())
                .for_each(|(score_row, feature_row)| {
                    for (class, tree) in round_trees.iter().enumerate() {
                        score_row[class] += tree.predict_row(feature_row);
                    }
                });
        }
        rounds.push(round_trees);

        train_loss.push(eval_train(
            &scores,
            &mut probs,
            &mut row_loss,
            &mut grad,
            &mut hess,
        ));
        if n_valid > 0 {
            let v = eval_valid(&valid_scores, &mut valid_probs, &mut valid_row_loss);
            valid_loss.push(v);
            if v < best_valid - 1e-12 {
                best_valid = v;
                best_round = round + 1;
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
            if let Some(patience) = stopping {
                if since_improvement >= patience {
                    break;
                }
            }
        }
    }

    if stopping.is_some() {
        rounds.truncate(best_round);
    }

    Ok(BoostedForest {
        num_classes: k,
        num_features: n_features,
        base_scores,
        rounds,
        train_loss,
        valid_loss,
    })
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(k: usize, loss: LossConfig) -> GbdtConfig {
        GbdtConfig {
            num_classes: k,
            params: GbdtParams {
                learning_rate: 0.1,
                max_depth: 3,
                max_trees: 60,
                early_stopping_rounds: None,
                min_samples_leaf: 1,
                ..GbdtParams::default()
            },
            loss,
            seed: 11,
        }
    }

    #[test]
    fn priors_without_trees() {
        let cfg = GbdtConfig {
            params: GbdtParams {
                max_trees: 1,
                ..GbdtParams::default()
            },
            ..config(2, LossConfig::StandardCe)
        };
        // Constant feature: no split is possible, so prediction stays at the
        // smoothed priors for every row.
        let features = vec![1.0; 10];
        let labels = vec![0, 1, 1, 1, 1, 1, 1, 1, 0, 0];
        let forest = fit(&features, 1, &labels, None, &cfg).unwrap();
        let probs = forest.predict_proba(&[1.0, 2.0], 1).unwrap();
        assert!((probs[0][1] - 0.7).abs() < 0.05);
        assert_eq!(probs[0], probs[1]);
        let sum: f64 = probs[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_class_predicts_certainty() {
        let features: Vec<f64> = (0..8).map(f64::from).collect();
        let labels = vec![0; 8];
        let forest = fit(&features, 1, &labels, None, &config(1, LossConfig::StandardCe)).unwrap();
        let probs = forest.predict_proba(&[3.0], 1).unwrap();
        assert_eq!(probs[0], vec![1.0]);
    }

    #[test]
    fn dominant_class_reaches_high_probability() {
        let features: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let labels = vec![1usize; 200];
        let forest = fit(&features, 1, &labels, None, &config(2, LossConfig::StandardCe)).unwrap();
        let probs = forest.predict_proba(&[4.0], 1).unwrap();
        assert!(probs[0][1] >= 0.99, "got {:?}", probs[0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let features = vec![1.0, 2.0];
        assert!(matches!(
            fit(&features, 1, &[0, 5], None, &config(2, LossConfig::StandardCe)),
            Err(PrestoError::LabelOutOfRange { label: 5, .. })
        ));
        assert!(fit(&features, 1, &[0], None, &config(2, LossConfig::StandardCe)).is_err());
        assert!(fit(
            &[1.0, f64::INFINITY],
            1,
            &[0, 1],
            None,
            &config(2, LossConfig::StandardCe)
        )
        .is_err());
        let forest = fit(&features, 1, &[0, 1], None, &config(2, LossConfig::StandardCe)).unwrap();
        assert!(matches!(
            forest.predict_proba(&[1.0, 2.0], 2),
            Err(PrestoError::FeatureCountMismatch { .. })
        ));
    }

    #[test]
    fn training_loss_decreases_and_is_recorded() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..120 {
            let x = i as f64 / 10.0;
            features.push(x);
            labels.push(usize::from(x > 6.0));
        }
        let forest = fit(&features, 1, &labels, None, &config(2, LossConfig::StandardCe)).unwrap();
        let history = forest.train_loss_history();
        assert_eq!(history.len(), forest.kept_rounds() + 1);
        for pair in history.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "training loss increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(history.last().unwrap() < &0.1);
    }

    #[test]
    fn early_stopping_truncates_to_best_round() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..160 {
            let x = (i % 40) as f64;
            features.push(x);
            labels.push(usize::from((i * 2654435761usize) % 97 < 48) );
        }
        let (vf, vl) = (features[..80].to_vec(), labels[..80].to_vec());
        let cfg = GbdtConfig {
            params: GbdtParams {
                learning_rate: 0.3,
                max_trees: 200,
                early_stopping_rounds: Some(5),
                ..GbdtParams::default()
            },
            ..config(2, LossConfig::StandardCe)
        };
        // Labels are pseudo-random: validation loss cannot keep improving.
        let forest = fit(&features, 1, &labels, Some((&vf, &vl)), &cfg).unwrap();
        assert!(forest.kept_rounds() < 200);
        let vh = forest.valid_loss_history();
        let best = vh.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((vh[forest.kept_rounds()] - best).abs() < 1e-12);
        assert!(vh[forest.kept_rounds()] <= vh[0] + 1e-12);
    }

    #[test]
    fn deterministic_across_runs() {
        let features: Vec<f64> = (0..300)
            .map(|i| ((i * 37 % 101) as f64) * 0.13)
            .collect();
        let labels: Vec<usize> = (0..100).map(|i| (i * 7 % 3) as usize).collect();
        let cfg = GbdtConfig {
            params: GbdtParams {
                colsample_per_node: 0.5,
                max_trees: 20,
                early_stopping_rounds: None,
                ..GbdtParams::default()
            },
            ..config(3, LossConfig::StandardCe)
        };
        let a = fit(&features, 3, &labels, None, &cfg).unwrap();
        let b = fit(&features, 3, &labels, None, &cfg).unwrap();
        let pa = a.predict_proba(&features, 3).unwrap();
        let pb = b.predict_proba(&features, 3).unwrap();
        assert_eq!(pa, pb, "same config and seed must be bit-identical");
    }

    #[test]
    fn structured_loss_trains() {
        let features: Vec<f64> = (0..150).map(|i| (i / 30) as f64).collect();
        let labels: Vec<usize> = (0..150).map(|i| i / 30).collect();
        let cfg = config(
            5,
            LossConfig::StructuredCe {
                singleton_weight: 0.1,
                block_size: None,
            },
        );
        let forest = fit(&features, 1, &labels, None, &cfg).unwrap();
        let probs = forest.predict_proba(&[0.0, 4.0], 1).unwrap();
        assert!(probs[0][0] > 0.5, "{:?}", probs[0]);
        assert!(probs[1][4] > 0.5, "{:?}", probs[1]);
    }
}
