//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probabilities sum to {0}")]
    ProbSum(f64),
    #[error("negative probability {prob} for intent {intent}")]
    NegativeProb { intent: String, prob: f64 },
    #[error("duplicate intent id {0}")]
    DuplicateIntent(String),
    #[error("duplicate doc id {0}")]
    DuplicateDoc(String),
    #[error("empty intent set")]
    NoIntents,
    #[error("empty document set")]
    NoDocs,
    #[error("relevance below rel_min: {value} for doc {doc}")]
    RelBelowMin { doc: String, value: f64 },
    #[error("relevance above rel_max: {value} for doc {doc}")]
    RelAboveMax { doc: String, value: f64 },
    #[error("rel_max must be positive, got {0}")]
    NonPositiveRelMax(f64),
    #[error("negative grades unsupported: rel_min = {0}")]
    NegativeRelMin(f64),
    #[error("rel_min {rel_min} exceeds rel_max {rel_max}")]
    RelBoundsInverted { rel_min: f64, rel_max: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown doc id {0}")]
    UnknownDoc(String),
    #[error("unknown intent id {0}")]
    UnknownIntent(String),
    #[error("duplicate doc id {0} in ranking")]
    DuplicateInRanking(String),
    #[error("ranking of length {len} exceeds cutoff k = {k}")]
    RankingTooLong { len: usize, k: usize },
    #[error("cutoff k must be positive")]
    ZeroCutoff,
    #[error("grade sequence of length {len} exceeds cutoff k = {k}")]
    TooManyGrades { len: usize, k: usize },
    #[error("ideal relevance list is empty")]
    EmptyIdeal,
    #[error("invalid metric spec: {0}")]
    InvalidMetricSpec(String),
    #[error("beta must be in (0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("document features required but absent")]
    MissingFeatures,
    #[error("enumeration budget exceeded: {required} arrangements > budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate query id {0}")]
    DuplicateQuery(String),
    #[error("invalid instance {query_id}: {source}")]
    InvalidInstance {
        query_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps a validation error with the query id it occurred in.
    pub fn for_query(self, query_id: impl Into<String>) -> Self {
        Error::InvalidInstance {
            query_id: query_id.into(),
            source: Box::new(self),
        }
    }
}
