use chrono::NaiveDate;
use thiserror::Error;

use crate::grid_data::CellId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("duplicate observation for cell ({lat}, {lon}) on {date}", lat = cell.lat_index, lon = cell.lon_index)]
    DuplicateKey { cell: CellId, date: NaiveDate },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("no grid cell falls inside the requested bounding box")]
    EmptySelection,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("window {start}..={end} is outside the panel's date span")]
    WindowOutOfSpan { start: NaiveDate, end: NaiveDate },

    #[error("invalid window specification: {0}")]
    InvalidSpec(String),

    #[error("no cell has complete data for the requested design")]
    NoCompleteRows,

    #[error("label imbalance: {0}")]
    LabelImbalance(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("missing predictor `{0}`")]
    MissingPredictor(String),

    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("task mismatch: expected a {expected} forest")]
    TaskMismatch { expected: &'static str },

    #[error("predictor sets differ")]
    PredictorSetMismatch,

    #[error("could not draw a split with both classes on each side after {attempts} attempts")]
    SplitDegenerate { attempts: usize },

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("invalid generator config: {0}")]
    Config(String),

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
