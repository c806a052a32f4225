use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("subarray index {index} out of range for array of {size} sensors")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid subarray: {0}")]
    InvalidSubarray(String),

    #[error("subarray size {k} exceeds array size {m}")]
    SubarrayTooLarge { k: usize, m: usize },

    #[error("covariance matrix is singular and could not be regularized")]
    SingularCovariance,

    #[error("direction is unidentifiable for this subarray (CRB unbounded)")]
    DegenerateDirection,

    #[error("every candidate subarray is degenerate for this direction")]
    AllDegenerate,

    #[error("enumeration of {candidates} candidates exceeds budget {budget}")]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("coincident sensors at indices {0} and {1}")]
    CoincidentSensors(usize, usize),

    #[error("no feasible subset found within {attempts} attempts (distance bound {bound})")]
    InfeasibleBound { attempts: usize, bound: f64 },

    #[error("attempt cap exhausted after {attempts} tries: {context}")]
    AttemptsExhausted { attempts: usize, context: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("class catalogs of the two datasets differ")]
    CatalogMismatch,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("need more sensors than sources: K={k}, sources={sources}")]
    TooFewSensors { k: usize, sources: usize },

    #[error("found only {found} peaks, {requested} requested")]
    TooFewPeaks { found: usize, requested: usize },

    #[error("dataset file: {0}")]
    DatasetFormat(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("validation: {0}")]
    Validation(String),

    #[error("csv schema mismatch: {0}")]
    CsvSchema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Machine-readable error category, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Validation,
    Runtime,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Validation(_)
            | Error::InvalidGeometry(_)
            | Error::InvalidDirection(_)
            | Error::InvalidSubarray(_)
            | Error::SubarrayTooLarge { .. }
            | Error::ShapeMismatch(_)
            | Error::CatalogMismatch
            | Error::CsvSchema(_) => ErrorCategory::Validation,
            _ => ErrorCategory::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
