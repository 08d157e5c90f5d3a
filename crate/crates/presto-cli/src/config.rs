//! The fit command's configuration file: a single versioned JSON document
//! with unknown keys rejected so typos surface instead of silently using
//! defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use presto_core::PrestoConfig;

use crate::errors::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_validation_fraction() -> f64 {
    0.2
}

fn default_retrain() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub schema_version: u32,
    pub train_csv: PathBuf,
    pub target_column: String,
    /// Fraction of rows held out to tune per-forest tree counts; 0 disables
    /// early stopping and trains every classifier for max_trees rounds.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// After tuning, retrain on all rows at the tuned tree counts.
    #[serde(default = "default_retrain")]
    pub retrain_on_full: bool,
    /// Reuse tuning-time partitions in the retrain instead of redrawing.
    #[serde(default)]
    pub freeze_partitions: bool,
    /// Where model.json and manifest.json land; the PRESTO_OUT_DIR
    /// environment variable overrides this.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: PrestoConfig,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "config schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(0.0..0.9).contains(&self.validation_fraction) {
            return Err(CliError::Usage(format!(
                "validation_fraction {} must lie in [0, 0.9)",
                self.validation_fraction
            )));
        }
        self.model
            .validate()
            .map_err(|e| CliError::Usage(format!("model config: {e}")))
    }
}

pub fn load_fit_config(path: &Path) -> Result<FitConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let config: FitConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// The output directory honors exactly one environment override.
pub fn resolve_output_dir(configured: &Path) -> PathBuf {
    match std::env::var_os("PRESTO_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let f = write_config(
            r#"{"schema_version":1,"train_csv":"train.csv","target_column":"y"}"#,
        );
        let cfg = load_fit_config(f.path()).unwrap();
        assert_eq!(cfg.validation_fraction, 0.2);
        assert!(cfg.retrain_on_full);
        assert_eq!(cfg.model.num_classifiers, 10);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let f = write_config(
            "{\"schema_version\":1,\"train_csv\":\"t.csv\",\n\"target_column\":\"y\",\n\"typo_field\":3}",
        );
        let err = load_fit_config(f.path()).unwrap_err();
        let msg = err.message();
        assert!(msg.contains("typo_field"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn schema_version_is_enforced() {
        let f = write_config(
            r#"{"schema_version":2,"train_csv":"t.csv","target_column":"y"}"#,
        );
        assert!(load_fit_config(f.path()).is_err());
    }

    #[test]
    fn bad_model_values_are_usage_errors() {
        let f = write_config(
            r#"{"schema_version":1,"train_csv":"t.csv","target_column":"y",
                "model":{"gbdt":{"learning_rate":-1.0}}}"#,
        );
        let err = load_fit_config(f.path()).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)), "{}", err.message());
    }
}
