//! `presto predict`: apply a saved model to a CSV, emitting densities,
//! means, intervals, or per-row negative log likelihood.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use presto_core::{model_from_json, PrestoModel};

use crate::errors::{CliError, Result};
use crate::iofs::atomic_write;

pub enum PredictMode {
    Density,
    Mean,
    Interval(f64),
    Nll,
}

/// The input matrix in model column order, plus targets when requested.
struct PredictInput {
    features: Vec<f64>,
    targets: Option<Vec<f64>>,
    n_rows: usize,
}

fn read_input(path: &Path, model: &PrestoModel, want_targets: bool) -> Result<PredictInput> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();

    // With a stored schema the input is matched by column name; otherwise
    // the file must carry exactly the trained feature count, in order.
    let (feature_cols, target_col) = match model.schema() {
        Some(schema) => {
            let mut cols = Vec::with_capacity(schema.feature_names.len());
            for name in &schema.feature_names {
                let idx = headers.iter().position(|h| h == name).ok_or_else(|| {
                    CliError::Data(format!(
                        "input {} lacks feature column {name:?} required by the model",
                        path.display()
                    ))
                })?;
                cols.push(idx);
            }
            let target = headers.iter().position(|h| h == &schema.target_column);
            (cols, target)
        }
        None => {
            if headers.len() != model.n_features() {
                return Err(CliError::Data(format!(
                    "model expects {} feature columns, input has {}",
                    model.n_features(),
                    headers.len()
                )));
            }
            ((0..headers.len()).collect(), None)
        }
    };
    if want_targets && target_col.is_none() {
        return Err(CliError::Data(
            "nll needs the target column present in the input".into(),
        ));
    }

    let mut features = Vec::new();
    let mut targets = want_targets.then(Vec::new);
    let mut n_rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for &col in &feature_cols {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                features.push(f64::NAN);
            } else {
                features.push(cell.parse().map_err(|_| {
                    CliError::Data(format!(
                        "non-numeric cell {cell:?} at data row {row}, column {:?}",
                        headers[col]
                    ))
                })?);
            }
        }
        if let (Some(tv), Some(tc)) = (targets.as_mut(), target_col) {
            let cell = record.get(tc).unwrap_or("");
            tv.push(cell.parse().map_err(|_| {
                CliError::Data(format!("non-numeric target {cell:?} at data row {row}"))
            })?);
        }
        n_rows += 1;
    }
    Ok(PredictInput {
        features,
        targets,
        n_rows,
    })
}

/// Write to stdout, treating a closed pipe (e.g. `| head`) as success.
fn print_stdout(content: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().write_all(content.as_bytes()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(e.into()),
    }
}

fn emit(output: Option<&PathBuf>, content: &str) -> Result<()> {
    match output {
        Some(path) => {
            atomic_write(path, content.as_bytes())?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => print_stdout(content),
    }
}

pub fn run(
    model_path: &Path,
    input_path: &Path,
    mode: PredictMode,
    output: Option<PathBuf>,
) -> Result<()> {
    let model_text = std::fs::read_to_string(model_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", model_path.display())))?;
    let model = model_from_json(&model_text)?;
    let input = read_input(input_path, &model, matches!(mode, PredictMode::Nll))?;
    let densities = model.predict_density(&input.features, model.n_features())?;
    debug_assert_eq!(densities.len(), input.n_rows);

    let mut out = String::new();
    match mode {
        PredictMode::Density => {
            for d in &densities {
                let line = serde_json::to_string(d)
                    .map_err(|e| CliError::Internal(format!("density serialization: {e}")))?;
                out.push_str(&line);
                out.push('\n');
            }
        }
        PredictMode::Mean => {
            out.push_str("mean\n");
            for d in &densities {
                writeln!(out, "{}", d.mean()).unwrap();
            }
        }
        PredictMode::Interval(coverage) => {
            if !(coverage > 0.0 && coverage < 1.0) {
                return Err(CliError::Usage(format!(
                    "interval level {coverage} must lie strictly between 0 and 1"
                )));
            }
            let alpha = 1.0 - coverage;
            out.push_str("lo,hi\n");
            for d in &densities {
                let lo = d.quantile(alpha / 2.0)?;
                let hi = d.quantile(1.0 - alpha / 2.0)?;
                writeln!(out, "{lo},{hi}").unwrap();
            }
        }
        PredictMode::Nll => {
            let targets = input.targets.expect("targets read for nll");
            out.push_str("nll\n");
            let mut total = 0.0;
            let mut violations = 0usize;
            for (d, &y) in densities.iter().zip(&targets) {
                let v = d.nll(y);
                if v.is_infinite() {
                    violations += 1;
                }
                total += v;
                writeln!(out, "{v}").unwrap();
            }
            let mean = total / targets.len().max(1) as f64;
            emit(output.as_ref(), &out)?;
            print_stdout(&format!("mean_nll={mean} support_violations={violations}\n"))?;
            return Ok(());
        }
    }
    emit(output.as_ref(), &out)
}
