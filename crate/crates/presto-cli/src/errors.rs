//! Exit-code classification: 1 for usage or configuration mistakes, 2 for
//! problems with input data or model files, 3 for internal failures.

use std::process::ExitCode;

use presto_bench::BenchError;
use presto_core::PrestoError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Data(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(3),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn is_config_mistake(e: &PrestoError) -> bool {
    match e {
        PrestoError::BadGbdtConfig(_)
        | PrestoError::NoClassifiers
        | PrestoError::BadQuantileCount(_)
        | PrestoError::BadExtendParams { .. }
        | PrestoError::SubsetTooLarge { .. }
        | PrestoError::BadBlockSize { .. }
        | PrestoError::BadSingletonWeight(_)
        | PrestoError::BadCoverage(_)
        | PrestoError::QuantileOutOfRange(_) => true,
        PrestoError::Classifier { source, .. } => is_config_mistake(source),
        _ => false,
    }
}

impl From<PrestoError> for CliError {
    fn from(e: PrestoError) -> Self {
        if is_config_mistake(&e) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match &e {
            BenchError::UnknownDataset(_) => CliError::Usage(e.to_string()),
            BenchError::Model(inner) if is_config_mistake(inner) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("io failure: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
