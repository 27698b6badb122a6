use std::io;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid tag {text:?}: {reason}")]
    Tag { text: String, reason: String },

    #[error("line {line}, column {column}: {source}")]
    TagAt {
        line: usize,
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },

    #[error("sentence {sentence_id:?}, column {column}: BIO violation at token {position}: {description}")]
    Bio {
        sentence_id: String,
        column: usize,
        position: usize,
        description: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("duplicate sentence id {0:?}")]
    DuplicateSentenceId(String),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("unmergeable predicates in sentence {sentence_id:?}: span {first:?} partially overlaps span {second:?}")]
    UnmergeablePredicates {
        sentence_id: String,
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("predicate index gap: index {missing} absent while {max} present")]
    PredicateGap { missing: u32, max: u32 },

    #[error("embedding format error at line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },

    #[error("no vectors for sentence {0:?}")]
    MissingSentence(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite {what}")]
    Diverged {
        epoch: usize,
        batch: usize,
        what: &'static str,
    },

    #[error("setup error: {0}")]
    Setup(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
