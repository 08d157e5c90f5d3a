//! `presto fit --config <path>`: train a model from a CSV and write the
//! versioned model document plus a run manifest.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use presto_bench::load_csv;
use presto_core::{model_to_json, DataSchema, PrestoModel};

use crate::config::{load_fit_config, resolve_output_dir, FitConfig, CONFIG_SCHEMA_VERSION};
use crate::errors::{CliError, Result};
use crate::iofs::{atomic_write, sha256_hex};

#[derive(Serialize)]
struct Manifest {
    schema_version: u32,
    resolved_config: FitConfig,
    input_path: String,
    input_sha256: String,
    n_rows: usize,
    n_features: usize,
    feature_names: Vec<String>,
    /// Per-classifier tree counts chosen by early stopping (equal to the
    /// final counts when no validation fold was used).
    tuned_rounds: Vec<usize>,
    retrained_on_full: bool,
}

pub fn run(config_path: &Path) -> Result<()> {
    let config = load_fit_config(config_path)?;
    let raw = std::fs::read(&config.train_csv).map_err(|e| {
        CliError::Data(format!("cannot read {}: {e}", config.train_csv.display()))
    })?;
    let input_sha256 = sha256_hex(&raw);
    let dataset = load_csv(&config.train_csv, &config.target_column)?;
    let n = dataset.n_rows();

    let (model, tuned_rounds, retrained) = if config.validation_fraction > 0.0 {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.model.seed);
        order.shuffle(&mut rng);
        let n_valid = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);
        let (valid_idx, train_idx) = order.split_at(n_valid);
        let (train_x, train_y) = dataset.subset(train_idx);
        let (valid_x, valid_y) = dataset.subset(valid_idx);
        let tuned = PrestoModel::fit(
            &train_x,
            dataset.n_features,
            &train_y,
            Some((&valid_x, &valid_y)),
            &config.model,
        )?;
        let plan = tuned.refit_plan(config.freeze_partitions);
        let rounds = plan.rounds.clone();
        if config.retrain_on_full {
            let model = PrestoModel::refit(
                &dataset.features,
                dataset.n_features,
                &dataset.targets,
                &config.model,
                &plan,
            )?;
            (model, rounds, true)
        } else {
            (tuned, rounds, false)
        }
    } else {
        let mut straight = config.model.clone();
        straight.gbdt.early_stopping_rounds = None;
        let model = PrestoModel::fit(
            &dataset.features,
            dataset.n_features,
            &dataset.targets,
            None,
            &straight,
        )?;
        let rounds = model
            .classifiers()
            .iter()
            .map(|c| c.forest().kept_rounds())
            .collect();
        (model, rounds, false)
    };

    let model = model.with_schema(DataSchema {
        feature_names: dataset.feature_names.clone(),
        target_column: config.target_column.clone(),
    });

    let out_dir = resolve_output_dir(&config.output_dir);
    let model_path = out_dir.join("model.json");
    let manifest_path = out_dir.join("manifest.json");
    let model_json = model_to_json(&model)?;
    atomic_write(&model_path, model_json.as_bytes())?;

    let manifest = Manifest {
        schema_version: CONFIG_SCHEMA_VERSION,
        resolved_config: config,
        input_path: dataset.name.clone(),
        input_sha256,
        n_rows: n,
        n_features: dataset.n_features,
        feature_names: dataset.feature_names.clone(),
        tuned_rounds,
        retrained_on_full: retrained,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Internal(format!("manifest serialization: {e}")))?;
    atomic_write(&manifest_path, manifest_json.as_bytes())?;

    println!("wrote {}", model_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}
