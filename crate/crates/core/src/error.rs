//! Error types shared across the engine.

use thiserror::Error;

/// Position inside a source text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum CarlError {
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: Pos, msg: String },

    #[error("lex error at {pos}: {msg}")]
    Lex { pos: Pos, msg: String },

    #[error("scope error: {0}")]
    Scope(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("recursive causal model: {0}")]
    Recursion(String),

    #[error("condition error: {0}")]
    Condition(String),

    #[error("missing file: {0}")]
    MissingFile(String),

    #[error("referential error: {0}")]
    Referential(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing value: {0}")]
    MissingValue(String),

    #[error("cycle in grounded graph: {0}")]
    Cycle(String),

    #[error("treated and response units are not relationally connected: {0}")]
    NotConnected(String),

    #[error("query is unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("degenerate contrast: {0}")]
    DegenerateContrast(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("all strata empty: {0}")]
    EmptyStrata(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("padding overflow: vector of length {len} exceeds pad length {pad_len}")]
    PadOverflow { len: usize, pad_len: usize },

    #[error("empty join: {0}")]
    JoinEmpty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CarlError>;

impl CarlError {
    pub fn parse(pos: Pos, msg: impl Into<String>) -> Self {
        CarlError::Parse {
            pos,
            msg: msg.into(),
        }
    }

    pub fn lex(pos: Pos, msg: impl Into<String>) -> Self {
        CarlError::Lex {
            pos,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable kind tag, used by the CLI for exit codes
    /// and error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            CarlError::Parse { .. } => "ParseError",
            CarlError::Lex { .. } => "LexError",
            CarlError::Scope(_) => "ScopeError",
            CarlError::Schema(_) => "SchemaError",
            CarlError::UnknownName(_) => "UnknownName",
            CarlError::Arity(_) => "ArityError",
            CarlError::Recursion(_) => "RecursionError",
            CarlError::Condition(_) => "ConditionError",
            CarlError::MissingFile(_) => "MissingFile",
            CarlError::Referential(_) => "ReferentialError",
            CarlError::Domain(_) => "DomainError",
            CarlError::MissingValue(_) => "MissingValue",
            CarlError::Cycle(_) => "CycleError",
            CarlError::NotConnected(_) => "NotConnected",
            CarlError::Unidentifiable(_) => "UnidentifiableError",
            CarlError::DegenerateContrast(_) => "DegenerateContrast",
            CarlError::RankDeficient(_) => "RankDeficient",
            CarlError::EmptyStrata(_) => "EmptyStrata",
            CarlError::EmptyDataset(_) => "EmptyDataset",
            CarlError::PadOverflow { .. } => "PadOverflow",
            CarlError::JoinEmpty(_) => "JoinEmpty",
            CarlError::Io(_) => "IoError",
            CarlError::Csv(_) => "CsvError",
        }
    }
}
