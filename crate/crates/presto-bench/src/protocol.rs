//! The benchmark protocol: per-trial splits, depth tuning, the
//! fit/retrain/evaluate cycle, and the reported measurements (test NLL, RMSE
//! of density means, prediction-interval coverage, learning curves, and the
//! structured-versus-standard comparison).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use presto_core::{LossConfig, PiecewiseConstantDensity, PrestoConfig, PrestoModel};

use crate::data::Dataset;
use crate::error::{BenchError, Result};
use crate::registry::DEPTH_GRID;

/// Nominal interval coverages reported by every trial.
pub const COVERAGE_LEVELS: [f64; 5] = [0.2, 0.5, 0.8, 0.9, 0.95];

/// One trial of the protocol: which dataset split to draw and how to train.
#[derive(Debug, Clone, Serialize)]
pub struct TrialSpec {
    pub dataset: String,
    pub trial: usize,
    /// Drives the split, every partition draw, and every tree of this trial.
    pub seed: u64,
    pub max_depth: usize,
    /// Keep the partitions drawn during tuning instead of redrawing from the
    /// combined fold during the retrain.
    pub freeze_partitions: bool,
    /// Carry each test row's predicted density in the result.
    pub dump_densities: bool,
}

impl TrialSpec {
    pub fn new(dataset: &str, trial: usize, seed: u64, max_depth: usize) -> Self {
        Self {
            dataset: dataset.to_string(),
            trial,
            seed,
            max_depth,
            freeze_partitions: false,
            dump_densities: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub dataset: String,
    pub trial: usize,
    pub seed: u64,
    pub variant: String,
    pub max_depth: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// Mean test negative log likelihood; infinite when any test target fell
    /// outside the predicted support.
    pub nll: f64,
    pub support_violations: usize,
    /// Root mean squared error of the density means.
    pub rmse: f64,
    /// Empirical coverage per entry of [`COVERAGE_LEVELS`].
    pub coverage: Vec<f64>,
    pub tuned_rounds: Vec<usize>,
    /// Test-row densities, present only when the spec asked for the dump.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<PiecewiseConstantDensity>>,
    pub wall_ms: u64,
}

/// Mean and standard error of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    /// None with a single trial, where no standard error exists.
    pub se: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub dataset: String,
    pub variant: String,
    pub n_trials: usize,
    pub n_rows: usize,
    pub nll: MeanSe,
    pub rmse: MeanSe,
    pub coverage: Vec<MeanSe>,
    pub support_violations: usize,
}

pub fn variant_name(loss: &LossConfig) -> &'static str {
    match loss {
        LossConfig::StandardCe => "standard",
        LossConfig::StructuredCe { .. } => "structured",
        LossConfig::SingletonStructuredCe => "singleton",
    }
}

/// Shuffle rows by seed and cut 10% test, then 20% of the remainder as
/// validation.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(BenchError::TooFewRows(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_test = ((n as f64) * 0.10).round().max(1.0) as usize;
    let remainder = n - n_test;
    let n_valid = ((remainder as f64) * 0.20).round().max(1.0) as usize;
    let test = order[..n_test].to_vec();
    let valid = order[n_test..n_test + n_valid].to_vec();
    let train = order[n_test + n_valid..].to_vec();
    Ok((train, valid, test))
}

/// Mean NLL over test rows plus the count of rows whose target fell outside
/// the predicted support (each contributes +inf and a logged warning).
pub fn nll_summary(densities: &[PiecewiseConstantDensity], targets: &[f64]) -> (f64, usize) {
    let mut total = 0.0;
    let mut violations = 0usize;
    for (d, &y) in densities.iter().zip(targets) {
        match d.nll_checked(y) {
            Ok(v) => total += v,
            Err(_) => {
                log::warn!("target {y} has zero predicted density");
                violations += 1;
                total = f64::INFINITY;
            }
        }
    }
    (total / targets.len().max(1) as f64, violations)
}

/// Fraction of rows whose target falls inside the central interval at each
/// nominal level. Counts are integers; the rate is exactly count/n.
pub fn coverage_eval(
    densities: &[PiecewiseConstantDensity],
    targets: &[f64],
    levels: &[f64],
) -> Result<Vec<f64>> {
    let n = targets.len().max(1);
    let mut rates = Vec::with_capacity(levels.len());
    for &level in levels {
        let alpha = 1.0 - level;
        let mut inside = 0usize;
        for (d, &y) in densities.iter().zip(targets) {
            let lo = d.quantile(alpha / 2.0)?;
            let hi = d.quantile(1.0 - alpha / 2.0)?;
            if lo <= y && y <= hi {
                inside += 1;
            }
        }
        rates.push(inside as f64 / n as f64);
    }
    Ok(rates)
}

fn resolved_config(base: &PrestoConfig, spec: &TrialSpec) -> PrestoConfig {
    let mut config = base.clone();
    config.seed = spec.seed;
    config.gbdt.max_depth = spec.max_depth;
    config
}

struct FittedTrial {
    model: PrestoModel,
    tuned_rounds: Vec<usize>,
    n_train: usize,
    n_valid: usize,
}

/// Tune per-forest tree counts on the train/valid split, then retrain on the
/// combined fold at those counts.
fn fit_for_trial(
    dataset: &Dataset,
    base: &PrestoConfig,
    spec: &TrialSpec,
    train: &[usize],
    valid: &[usize],
) -> Result<FittedTrial> {
    let config = resolved_config(base, spec);
    let (train_x, train_y) = dataset.subset(train);
    let (valid_x, valid_y) = dataset.subset(valid);
    let tuned = PrestoModel::fit(
        &train_x,
        dataset.n_features,
        &train_y,
        Some((&valid_x, &valid_y)),
        &config,
    )?;
    let plan = tuned.refit_plan(spec.freeze_partitions);
    let combined: Vec<usize> = train.iter().chain(valid).copied().collect();
    let (full_x, full_y) = dataset.subset(&combined);
    let model = PrestoModel::refit(&full_x, dataset.n_features, &full_y, &config, &plan)?;
    Ok(FittedTrial {
        model,
        tuned_rounds: plan.rounds,
        n_train: train.len(),
        n_valid: valid.len(),
    })
}

/// Run one complete trial: split, tune, retrain, and measure on the test fold.
pub fn run_trial(dataset: &Dataset, base: &PrestoConfig, spec: &TrialSpec) -> Result<TrialResult> {
    let start = Instant::now();
    let (train, valid, test) = split_indices(dataset.n_rows(), spec.seed)?;
    let fitted = fit_for_trial(dataset, base, spec, &train, &valid)?;
    let (test_x, test_y) = dataset.subset(&test);
    let densities = fitted.model.predict_density(&test_x, dataset.n_features)?;

    let (nll, support_violations) = nll_summary(&densities, &test_y);
    let estimates: Vec<f64> = densities.iter().map(PiecewiseConstantDensity::mean).collect();
    let rmse = (estimates
        .iter()
        .zip(&test_y)
        .map(|(e, y)| (e - y) * (e - y))
        .sum::<f64>()
        / test_y.len().max(1) as f64)
        .sqrt();
    let coverage = coverage_eval(&densities, &test_y, &COVERAGE_LEVELS)?;

    Ok(TrialResult {
        dataset: spec.dataset.clone(),
        trial: spec.trial,
        seed: spec.seed,
        variant: variant_name(&base.loss).to_string(),
        max_depth: spec.max_depth,
        n_train: fitted.n_train,
        n_valid: fitted.n_valid,
        n_test: test.len(),
        nll,
        support_violations,
        rmse,
        coverage,
        tuned_rounds: fitted.tuned_rounds,
        densities: spec.dump_densities.then_some(densities),
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Pick max depth by validation NLL on the first trial's split; the winner is
/// reused for all trials. Returns the choice and the per-depth scores.
pub fn tune_max_depth(
    dataset: &Dataset,
    base: &PrestoConfig,
    base_seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let (train, valid, _test) = split_indices(dataset.n_rows(), base_seed)?;
    let (train_x, train_y) = dataset.subset(&train);
    let (valid_x, valid_y) = dataset.subset(&valid);
    let mut scores = Vec::with_capacity(DEPTH_GRID.len());
    let mut best: Option<(usize, f64)> = None;
    for depth in DEPTH_GRID {
        let mut config = base.clone();
        config.seed = base_seed;
        config.gbdt.max_depth = depth;
        let model = PrestoModel::fit(
            &train_x,
            dataset.n_features,
            &train_y,
            Some((&valid_x, &valid_y)),
            &config,
        )?;
        let densities = model.predict_density(&valid_x, dataset.n_features)?;
        let (nll, _) = nll_summary(&densities, &valid_y);
        scores.push((depth, nll));
        if best.is_none_or(|(_, b)| nll < b) {
            best = Some((depth, nll));
        }
    }
    Ok((best.unwrap().0, scores))
}

/// Run `trials` independent trials with seeds `base_seed + trial`. Trials
/// execute in parallel; results are assembled in trial order, so the output
/// does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_trials(
    dataset: &Dataset,
    base: &PrestoConfig,
    dataset_id: &str,
    trials: usize,
    base_seed: u64,
    max_depth: usize,
    freeze_partitions: bool,
    dump_densities: bool,
) -> Result<Vec<TrialResult>> {
    use rayon::prelude::*;
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let spec = TrialSpec {
                freeze_partitions,
                dump_densities,
                ..TrialSpec::new(dataset_id, trial, base_seed + trial as u64, max_depth)
            };
            run_trial(dataset, base, &spec)
        })
        .collect()
}

fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    if n < 2 {
        return MeanSe { mean, se: None };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    MeanSe {
        mean,
        se: Some((var / n as f64).sqrt()),
    }
}

/// Mean and standard error per metric over a set of trials.
pub fn aggregate(dataset: &str, n_rows: usize, results: &[TrialResult]) -> Summary {
    assert!(!results.is_empty(), "cannot aggregate zero trials");
    let nll: Vec<f64> = results.iter().map(|r| r.nll).collect();
    let rmse: Vec<f64> = results.iter().map(|r| r.rmse).collect();
    let coverage = (0..COVERAGE_LEVELS.len())
        .map(|level| {
            let rates: Vec<f64> = results.iter().map(|r| r.coverage[level]).collect();
            mean_se(&rates)
        })
        .collect();
    Summary {
        dataset: dataset.to_string(),
        variant: results[0].variant.clone(),
        n_trials: results.len(),
        n_rows,
        nll: mean_se(&nll),
        rmse: mean_se(&rmse),
        coverage,
        support_violations: results.iter().map(|r| r.support_violations).sum(),
    }
}

/// Test NLL as a function of the number of averaged classifiers, from one
/// trial fit once with `m_max` classifiers and prefix-averaged.
pub fn learning_curve(
    dataset: &Dataset,
    base: &PrestoConfig,
    spec: &TrialSpec,
    m_max: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut config = base.clone();
    config.num_classifiers = m_max;
    let (train, valid, test) = split_indices(dataset.n_rows(), spec.seed)?;
    let fitted = fit_for_trial(dataset, &config, spec, &train, &valid)?;
    let (test_x, test_y) = dataset.subset(&test);

    // Per classifier, the pdf of its own density at each test target; the
    // averaged pdf over the first m classifiers is the prefix mean.
    let n_test = test_y.len();
    let per_classifier: Vec<Vec<f64>> = fitted
        .model
        .classifiers()
        .iter()
        .map(|c| {
            let probs = c.forest().predict_proba(&test_x, dataset.n_features)?;
            Ok((0..n_test)
                .map(|row| match c.partition().bin_of(test_y[row]) {
                    Some(bin) => probs[row][bin] / c.partition().width(bin),
                    None => 0.0,
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut curve = Vec::with_capacity(m_max);
    let mut prefix = vec![0.0; n_test];
    for m in 1..=m_max {
        for (acc, &pdf) in prefix.iter_mut().zip(&per_classifier[m - 1]) {
            *acc += pdf;
        }
        let nll = prefix
            .iter()
            .map(|&sum| -(sum / m as f64).ln())
            .sum::<f64>()
            / n_test.max(1) as f64;
        curve.push((m, nll));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantComparison {
    pub structured: Summary,
    pub standard: Summary,
    pub structured_results: Vec<TrialResult>,
    pub standard_results: Vec<TrialResult>,
    /// Mean structured NLL minus mean standard NLL; negative favors the
    /// structured variant.
    pub nll_difference: f64,
}

/// Run both loss variants over identical splits and seeds.
pub fn variant_comparison(
    dataset: &Dataset,
    base: &PrestoConfig,
    dataset_id: &str,
    trials: usize,
    base_seed: u64,
    max_depth: usize,
    freeze_partitions: bool,
) -> Result<VariantComparison> {
    let mut structured_cfg = base.clone();
    if !matches!(structured_cfg.loss, LossConfig::StructuredCe { .. }) {
        structured_cfg.loss = LossConfig::StructuredCe {
            singleton_weight: 0.1,
            block_size: None,
        };
    }
    let mut standard_cfg = base.clone();
    standard_cfg.loss = LossConfig::StandardCe;

    let structured_results = run_trials(
        dataset,
        &structured_cfg,
        dataset_id,
        trials,
        base_seed,
        max_depth,
        freeze_partitions,
        false,
    )?;
    let standard_results = run_trials(
        dataset,
        &standard_cfg,
        dataset_id,
        trials,
        base_seed,
        max_depth,
        freeze_partitions,
        false,
    )?;
    let structured = aggregate(dataset_id, dataset.n_rows(), &structured_results);
    let standard = aggregate(dataset_id, dataset.n_rows(), &standard_results);
    let nll_difference = structured.nll.mean - standard.nll.mean;
    Ok(VariantComparison {
        structured,
        standard,
        structured_results,
        standard_results,
        nll_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_have_documented_fractions() {
        let (train, valid, test) = split_indices(1000, 7).unwrap();
        assert_eq!(test.len(), 100);
        assert_eq!(valid.len(), 180);
        assert_eq!(train.len(), 720);
        let mut all: Vec<usize> = train.iter().chain(&valid).chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        // Deterministic given the seed, different across seeds.
        let again = split_indices(1000, 7).unwrap();
        assert_eq!(again.2, test);
        let other = split_indices(1000, 8).unwrap();
        assert_ne!(other.2, test);
        assert!(split_indices(5, 1).is_err());
    }

    #[test]
    fn aggregate_mean_and_se() {
        let template = TrialResult {
            dataset: "t".into(),
            trial: 0,
            seed: 0,
            variant: "structured".into(),
            max_depth: 3,
            n_train: 10,
            n_valid: 2,
            n_test: 2,
            nll: 1.0,
            support_violations: 0,
            rmse: 2.0,
            coverage: vec![0.5; 5],
            tuned_rounds: vec![3],
            densities: None,
            wall_ms: 1,
        };
        let single = aggregate("t", 14, std::slice::from_ref(&template));
        assert_eq!(single.nll.mean, 1.0);
        assert!(single.nll.se.is_none(), "single trial has no SE");

        let mut second = template.clone();
        second.nll = 3.0;
        let two = aggregate("t", 14, &[template.clone(), second]);
        assert_eq!(two.nll.mean, 2.0);
        assert!((two.nll.se.unwrap() - 1.0).abs() < 1e-12);

        let identical = aggregate("t", 14, &[template.clone(), template.clone()]);
        assert_eq!(identical.nll.se.unwrap(), 0.0);
    }

    #[test]
    fn coverage_is_exact_and_monotone() {
        use presto_core::{BinPartition, PiecewiseConstantDensity};
        let d = PiecewiseConstantDensity::from_probabilities(
            &[1.0],
            BinPartition::new(vec![0.0, 10.0]).unwrap(),
        )
        .unwrap();
        let densities = vec![d.clone(), d.clone(), d];
        // Medians: always covered.
        let rates = coverage_eval(&densities, &[5.0, 5.0, 5.0], &COVERAGE_LEVELS).unwrap();
        assert!(rates.iter().all(|&r| r == 1.0));
        // One tail target at 0.3: inside the 95% central interval
        // (0.25, 9.75) but outside the narrower ones.
        let rates = coverage_eval(&densities, &[5.0, 5.0, 0.3], &COVERAGE_LEVELS).unwrap();
        for pair in rates.windows(2) {
            assert!(pair[1] >= pair[0], "coverage must be nondecreasing");
        }
        assert_eq!(rates[0], 2.0 / 3.0);
        assert_eq!(rates[4], 1.0);
    }
}
