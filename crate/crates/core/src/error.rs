use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index {index} out of range for size {size}")]
    Index { index: usize, size: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("batch of size {0} is too small for training-mode batch normalization (need at least 2)")]
    BatchSize(usize),

    #[error("layer state error: {0}")]
    State(String),

    #[error("lex error at byte {offset}: {message}")]
    Lex { offset: usize, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("{}", format_rows(.0))]
    Rows(Vec<RowError>),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |grad| = {max_abs_grad:e})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        max_abs_grad: f64,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("submission {id}: {source}")]
    Submission {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("checkpoint is truncated: {0}")]
    Truncated(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A problem with one data row, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

fn format_rows(rows: &[RowError]) -> String {
    let mut out = format!("{} invalid row(s)", rows.len());
    for r in rows {
        out.push_str(&format!("\n  line {}: {}", r.line, r.message));
    }
    out
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
