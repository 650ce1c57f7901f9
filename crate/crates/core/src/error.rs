use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no input")]
    NoInput,

    #[error("invalid document {doc_id}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },

    #[error("slice below lexical threshold: {slice}")]
    BelowLexicalThreshold { slice: String },

    #[error("out-of-vocabulary: {word:?} not in slice {slice}")]
    OutOfVocabulary { word: String, slice: String },

    #[error("zero vector")]
    ZeroVector,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("too few anchors between {source_slice} and {target_slice}: {found} < {needed}")]
    TooFewAnchors {
        source_slice: String,
        target_slice: String,
        found: usize,
        needed: usize,
    },

    #[error("degenerate anchor matrix between {source_slice} and {target_slice}")]
    DegenerateAnchors {
        source_slice: String,
        target_slice: String,
    },

    #[error("word {0:?} is not a graph node")]
    NotInGraph(String),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact for stage {stage}: run {run_first} first")]
    MissingUpstream {
        stage: &'static str,
        run_first: &'static str,
    },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 missing upstream artifact,
    /// 4 anything wrong with the data or the files on disk.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::InvalidSpec(_) => 2,
            Error::MissingUpstream { .. } => 3,
            _ => 4,
        }
    }
}
