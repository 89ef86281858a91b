use std::path::PathBuf;

use thiserror::Error;

/// Failures talking to an NLI, embedding or decomposition backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("{provider}: transport failure after {attempts} attempt(s): {message}")]
    Transport {
        provider: &'static str,
        attempts: u32,
        message: String,
    },
    #[error("{provider}: protocol error: {message}")]
    Protocol {
        provider: &'static str,
        message: String,
    },
    #[error("{provider}: invalid input: {message}")]
    InvalidInput {
        provider: &'static str,
        message: String,
    },
}

/// Dataset ingestion failures. Line numbers are 1-based.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusteringError {
    #[error("non-finite log-likelihood at EM iteration {iteration} (K={k})")]
    NonFinite { iteration: usize, k: usize },
    #[error("covariance of component {component} is not positive-definite")]
    NotPositiveDefinite { component: usize },
    #[error("invalid clustering input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("correlation undefined: {0}")]
    Undefined(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
}

/// Top-level error for pipeline and harness entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
