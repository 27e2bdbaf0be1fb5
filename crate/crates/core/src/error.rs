use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed vector file header: {0}")]
    Header(String),

    #[error("payload size mismatch: header declares {rows} rows of dim {dim} ({expected} bytes) but payload has {actual} bytes")]
    DimMismatch {
        rows: u64,
        dim: u32,
        expected: u64,
        actual: u64,
    },

    #[error("malformed key file: {0}")]
    Keys(String),

    #[error("key count mismatch: {keys} keys for {rows} rows")]
    KeyCount { keys: usize, rows: usize },

    #[error("duplicate key {key:?} at row {row}")]
    DuplicateKey { key: String, row: usize },

    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("zero-norm vector at row {row}")]
    ZeroNorm { row: usize },

    #[error("table has no rows")]
    EmptyTable,

    #[error("unknown key {0:?}")]
    UnknownKey(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("lexicon line {line}: {message}")]
    LexiconParse { line: usize, message: String },

    #[error("lexicon invariant violated: {0}")]
    Lexicon(String),

    #[error("unknown sense key {0:?}")]
    UnknownSense(String),

    #[error("no candidate senses for lemma {lemma:?} with pos {pos}")]
    UnknownLemma { lemma: String, pos: String },

    #[error("zero-norm input vector")]
    ZeroNormInput,

    #[error("non-finite input vector")]
    NonFiniteInput,

    #[error("empty candidate list for instance {0:?}")]
    NoCandidates(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient at training step {step}")]
    NonFiniteGradient { step: usize },

    #[error("training aborted at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("instance {id:?}: {source}")]
    Instance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
