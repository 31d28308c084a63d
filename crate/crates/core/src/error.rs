use thiserror::Error;

/// Errors produced by the chemistry library.
#[derive(Debug, Error)]
pub enum ChemError {
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid model set: {0}")]
    InvalidModelSet(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid pair: {0}")]
    InvalidPair(String),

    #[error("size limit exceeded: {size} models, limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("malformed grade matrix: {0}")]
    MalformedMatrix(String),

    #[error("missing cost for subset {{{0}}}")]
    MissingCost(String),

    #[error("chemistry table is missing pair ({0}, {1})")]
    MissingPair(String, String),

    #[error("no candidate subsets supplied")]
    NoCandidates,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("comparator contract violated: returned {0}")]
    Comparator(f64),

    #[error("{path}: row {row}, field `{field}`: {message}")]
    Parse {
        path: String,
        row: usize,
        field: String,
        message: String,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    Migration { found: u32, expected: u32 },

    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ChemError>;
