//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::data::Split;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("row {row}: duplicate episode id `{episode_id}` in split {split}")]
    DuplicateEpisode {
        row: usize,
        episode_id: String,
        split: Split,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("specialist `{0}` missing from record")]
    MissingSpecialist(String),

    #[error("no calibrator fitted for specialist `{0}`")]
    MissingCalibrator(String),

    #[error("labels contain a single class; need both outcomes present")]
    SingleClass,

    #[error("zero variance in `{0}` logits; cannot standardize")]
    ZeroVariance(String),

    #[error(
        "perfect separation suspected: weight magnitude exceeded {guard} in standardized units"
    )]
    PerfectSeparation { guard: f64 },

    #[error("need at least {required} records, got {actual}")]
    TooFewRecords { required: usize, actual: usize },

    #[error("n = {n} is smaller than the requested {bins} bins")]
    TooFewForBins { n: usize, bins: usize },

    #[error("metric undefined on too many bootstrap resamples ({failures}/{total})")]
    UndefinedResamples { failures: usize, total: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid span [{start}, {end}) for source text of length {len}")]
    InvalidSpan {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("feature groups must partition the columns: {0}")]
    InvalidGroups(String),

    #[error("all calibrator candidates failed to fit")]
    AllCandidatesFailed,

    #[error("all meta-learner weights are zero")]
    AllZeroWeights,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported format version {found}; this build reads version {supported}")]
    FormatVersion { found: u32, supported: u32 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
