use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path} has no column named {column:?} (columns: {available:?})")]
    MissingTargetColumn {
        path: PathBuf,
        column: String,
        available: Vec<String>,
    },

    #[error("non-numeric cell {value:?} at data row {row}, column {column:?} (empty cells mark missing features)")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("target cell is empty or non-numeric at data row {row}")]
    BadTarget { row: usize },

    #[error("{path} holds no data rows")]
    EmptyDataset { path: PathBuf },

    #[error("unknown dataset {0:?}; run with --list to see registered ids")]
    UnknownDataset(String),

    #[error("dataset file {path} is missing; fetch it first with scripts/fetch_uci.sh")]
    DatasetFileMissing { path: PathBuf },

    #[error("dataset has too few rows ({0}) for a train/valid/test split")]
    TooFewRows(usize),

    #[error(transparent)]
    Model(#[from] presto_core::PrestoError),
}

pub type Result<T> = std::result::Result<T, BenchError>;
