use thiserror::Error;

/// Which side of the mixture a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairClass {
    Match,
    NonMatch,
}

impl std::fmt::Display for PairClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairClass::Match => f.write_str("match"),
            PairClass::NonMatch => f.write_str("nonmatch"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {record}: {message}")]
    Input { record: String, message: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("missing column `{column}` in {file}")]
    MissingColumn { file: String, column: String },

    #[error("duplicate id `{id}` in {file}")]
    DuplicateId { file: String, id: String },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("degenerate {class} posterior with n = {n}: {reason}")]
    DegeneratePosterior {
        class: PairClass,
        n: usize,
        reason: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("need at least {needed} samples, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs or configuration
    /// rather than a runtime failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Invariant(_) | Error::DegeneratePosterior { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
