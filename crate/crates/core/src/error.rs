//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input dimensions disagree with each other or with the hyperparameters.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A quantity that must be strictly positive is not.
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    /// A required collection is empty.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// An index refers outside its valid range.
    #[error("{name} {value} out of range (limit {limit})")]
    IndexOutOfRange {
        name: &'static str,
        value: usize,
        limit: usize,
    },

    /// Cholesky factorization failed even at the largest permitted jitter.
    #[error("covariance is not positive definite; jitter escalated to {jitter:.1e} without success")]
    NotPositiveDefinite { jitter: f64 },

    /// Problem size exceeds the dense-solver safety cap.
    #[error("joint system has {rows} rows, above the cap of {cap}; set MONOGP_MAX_DIM to raise it")]
    SizeCap { rows: usize, cap: usize },

    /// The log joint is not finite at the sampler's initial state.
    #[error("log joint is not finite at initialization; widen init_jitter_sd or check the data scale")]
    BadInitialization,

    /// Invalid run or model configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// CSV header does not match the expected schema.
    #[error("schema mismatch: expected header `{expected}`, got `{got}`")]
    SchemaMismatch { expected: String, got: String },

    /// A CSV cell failed to parse as a number.
    #[error("non-numeric value in column `{column}` on line {line}")]
    NonNumericCell { column: String, line: usize },

    /// Two rows share the same (location, time) key.
    #[error("duplicate observation for location {location} at t = {time}")]
    DuplicateKey { location: u64, time: f64 },

    /// A location is missing a required time point.
    #[error("location {location} is missing time point t = {time}")]
    MissingTimePoint { location: u64, time: f64 },

    /// Locations disagree on the shared time grid.
    #[error("location {location} has {got} time points, expected {expected}")]
    RaggedTimeGrid {
        location: u64,
        expected: usize,
        got: usize,
    },

    /// A feature column is constant and cannot be standardized.
    #[error("column `{column}` has zero variance and cannot be standardized")]
    ZeroVarianceColumn { column: &'static str },

    /// A location repeats with different feature values.
    #[error("location {location} appears with inconsistent feature values")]
    InconsistentFeatures { location: u64 },

    /// Not enough chains or draws for the requested diagnostic.
    #[error("diagnostic needs {needed}, got {got}")]
    InsufficientDraws {
        needed: &'static str,
        got: usize,
    },

    /// A cross-validation fold would leave no training data.
    #[error("cross-validation fold `{0}` leaves an empty training set")]
    EmptyFold(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
