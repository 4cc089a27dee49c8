//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    #[error("arity mismatch in {context}: expected {expected}, got {got}")]
    ArityMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("value out of range at row {row}, column {column}: {value}")]
    ValueOutOfRange {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("duplicate record pair in problem {problem}: ({left}, {right})")]
    DuplicatePair {
        problem: String,
        left: String,
        right: String,
    },

    #[error("row {row} of {path} names source pair {got}, file declares {expected}")]
    SourcePairMismatch {
        path: String,
        row: usize,
        expected: String,
        got: String,
    },

    #[error("need at least 2 problems to split, got {got}")]
    TooFewProblems { got: usize },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("CDF grid needs at least 2 points, got {got}")]
    InvalidGrid { got: usize },

    #[error("histogram needs at least 2 bins, got {got}")]
    InvalidBins { got: usize },

    #[error("negative distance: {value}")]
    NegativeDistance { value: f64 },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("training set contains a single class")]
    SingleClassTrainingSet,

    #[error("{votes} votes out of range for a committee of {k}")]
    VoteOutOfRange { votes: usize, k: usize },

    #[error("budget infeasible: {clusters} clusters x b_min {b_min} exceeds b_tot {b_tot} after merging")]
    InfeasibleBudget {
        clusters: usize,
        b_min: usize,
        b_tot: usize,
    },

    #[error("oracle has no label for pair ({left}, {right})")]
    OracleMiss { left: String, right: String },

    #[error("budget {budget} exhausted during the seeding phase")]
    BudgetExhaustedAtSeed { budget: usize },

    #[error("problem {id} already present")]
    DuplicateProblem { id: String },

    #[error("repository contains no models")]
    EmptyRepository,

    #[error("corrupt repository archive: {section}")]
    CorruptManifest { section: String },

    #[error("repository version mismatch: archive has {found}, tool is {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("invalid synthetic spec: {reason}")]
    InvalidSpec { reason: String },

    #[error("invalid value: {reason}")]
    InvalidValue { reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// Stable machine-readable name of the error variant, used in CLI error
    /// JSON output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile { .. } => "MissingFile",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::ValueOutOfRange { .. } => "ValueOutOfRange",
            Error::DuplicatePair { .. } => "DuplicatePair",
            Error::SourcePairMismatch { .. } => "SourcePairMismatch",
            Error::TooFewProblems { .. } => "TooFewProblems",
            Error::EmptyDistribution => "EmptyDistribution",
            Error::InvalidGrid { .. } => "InvalidGrid",
            Error::InvalidBins { .. } => "InvalidBins",
            Error::NegativeDistance { .. } => "NegativeDistance",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::SingleClassTrainingSet => "SingleClassTrainingSet",
            Error::VoteOutOfRange { .. } => "VoteOutOfRange",
            Error::InfeasibleBudget { .. } => "InfeasibleBudget",
            Error::OracleMiss { .. } => "OracleMiss",
            Error::BudgetExhaustedAtSeed { .. } => "BudgetExhaustedAtSeed",
            Error::DuplicateProblem { .. } => "DuplicateProblem",
            Error::EmptyRepository => "EmptyRepository",
            Error::CorruptManifest { .. } => "CorruptManifest",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::InvalidSpec { .. } => "InvalidSpec",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "Parse",
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
