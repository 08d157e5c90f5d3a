use thiserror::Error;

/// Errors produced while building partitions, densities, or models.
#[derive(Debug, Error)]
pub enum PrestoError {
    #[error("bin partition needs at least 2 edges, got {0}")]
    TooFewEdges(usize),

    #[error("bin partition edges must be strictly increasing and finite ({left} !< {right} at position {index})")]
    NonIncreasingEdges { index: usize, left: f64, right: f64 },

    #[error("expected {expected} probabilities for {expected} bins, got {actual}")]
    ProbabilityLengthMismatch { expected: usize, actual: usize },

    #[error("probabilities must sum to 1 within {tolerance:e}, got sum {sum}")]
    ProbabilitiesNotNormalized { sum: f64, tolerance: f64 },

    #[error("probability at index {index} is negative ({value})")]
    NegativeProbability { index: usize, value: f64 },

    #[error("cannot average an empty list of densities")]
    EmptyAverage,

    #[error("quantile level {0} is outside [0, 1]")]
    QuantileOutOfRange(f64),

    #[error("density is zero at observation {0}")]
    ZeroDensityAt(f64),

    #[error("target sample is empty")]
    EmptyTarget,

    #[error("quantile count must be at least 1, got {0}")]
    BadQuantileCount(usize),

    #[error("target values are degenerate: fewer than 2 unique edges remain (all values equal {0}?)")]
    DegeneratePartition(f64),

    #[error("extend parameters invalid: need 0 <= lower < upper <= 1 and scale >= 0, got ({lower}, {upper}, {scale})")]
    BadExtendParams { lower: f64, upper: f64, scale: f64 },

    #[error("subset size {subset} exceeds the {interior} interior grid points")]
    SubsetTooLarge { subset: usize, interior: usize },

    #[error("value {value} falls outside the partition range [{low}, {high}]")]
    OutOfPartitionRange { value: f64, low: f64, high: f64 },

    #[error("weighted partition set is invalid: {0}")]
    BadPartitionSet(String),

    #[error("block size {block_size} must satisfy 1 <= s < k/2 for k = {num_classes}")]
    BadBlockSize { block_size: usize, num_classes: usize },

    #[error("singleton weight {0} must lie in (0, 1)")]
    BadSingletonWeight(f64),

    #[error("gbdt config invalid: {0}")]
    BadGbdtConfig(String),

    #[error("label {label} out of range for {num_classes} classes at row {row}")]
    LabelOutOfRange { label: usize, num_classes: usize, row: usize },

    #[error("feature matrix has {actual} values, not a multiple of {n_features} features")]
    RaggedMatrix { actual: usize, n_features: usize },

    #[error("row count mismatch: {rows} feature rows vs {labels} labels")]
    RowCountMismatch { rows: usize, labels: usize },

    #[error("non-finite feature value {value} at row {row}, column {column} (only NaN marks missing)")]
    NonFiniteFeature { row: usize, column: usize, value: f64 },

    #[error("non-finite target value {value} at row {row}")]
    NonFiniteTarget { row: usize, value: f64 },

    #[error("model expects {expected} features, got {actual}")]
    FeatureCountMismatch { expected: usize, actual: usize },

    #[error("training data is empty")]
    EmptyTrainingData,

    #[error("number of classifiers must be at least 1")]
    NoClassifiers,

    #[error("coverage level {0} must lie strictly between 0 and 1")]
    BadCoverage(f64),

    #[error("classifier {index}: {source}")]
    Classifier {
        index: usize,
        #[source]
        source: Box<PrestoError>,
    },

    #[error("model file is invalid: {0}")]
    BadModel(String),
}

impl PrestoError {
    /// Tag an error with the index of the classifier that produced it.
    pub fn for_classifier(self, index: usize) -> PrestoError {
        PrestoError::Classifier {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, PrestoError>;
