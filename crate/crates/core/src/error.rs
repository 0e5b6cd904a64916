use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate transaction id {tx_id:?} (line {line})")]
    DuplicateTx { tx_id: String, line: usize },

    #[error("transaction {tx_id:?} pushes the AAIN edge count past the cap of {cap}")]
    EdgeCapExceeded { tx_id: String, cap: u64 },

    #[error("unknown address {0:?}")]
    UnknownAddress(String),

    #[error("edge ({src}->{dst}, tx {tx}) is not incident to the center node")]
    NotIncident { src: u32, dst: u32, tx: u32 },

    #[error("unsupported motif template: {0}")]
    UnsupportedTemplate(String),

    #[error("motif counts were computed with different windows ({0}s vs {1}s)")]
    DeltaMismatch(u64, u64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "stage one selected zero reliable negatives (theta = {theta}); \
         lower expectations on the decision threshold or inspect the features"
    )]
    NoReliableNegatives { theta: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
