//! CSV ingestion: header row, one designated numeric target column, numeric
//! feature cells with empty meaning missing.

use std::path::Path;

use crate::error::{BenchError, Result};

/// A loaded dataset: row-major features plus the numeric target.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub n_features: usize,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    /// Gather the feature rows and targets at `indices`.
    pub fn subset(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(&self.features[i * self.n_features..(i + 1) * self.n_features]);
            targets.push(self.targets[i]);
        }
        (features, targets)
    }
}

/// Load a comma-separated UTF-8 file with a header row. Feature cells must be
/// numeric ('.' decimal) or empty for missing; the target column must be
/// numeric everywhere.
pub fn load_csv(path: &Path, target_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let target_index = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| BenchError::MissingTargetColumn {
            path: path.to_path_buf(),
            column: target_column.to_string(),
            available: headers.clone(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_index)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        for (col, cell) in record.iter().enumerate() {
            if col == target_index {
                let value: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or(BenchError::BadTarget { row })?;
                targets.push(value);
            } else if cell.is_empty() {
                features.push(f64::NAN);
            } else {
                let value: f64 = cell.parse().map_err(|_| BenchError::NonNumericCell {
                    row,
                    column: headers[col].clone(),
                    value: cell.to_string(),
                })?;
                features.push(value);
            }
        }
    }
    if targets.is_empty() {
        return Err(BenchError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Ok(Dataset {
        name,
        n_features: feature_names.len(),
        feature_names,
        features,
        targets,
    })
}
