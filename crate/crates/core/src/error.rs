use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid form: {0}")]
    InvalidForm(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("untagged nonzero mass at node {0}")]
    UntaggedAtom(usize),

    #[error("empty test dictionary")]
    EmptyDictionary,

    #[error("test function {index} violates its declared bounds: {reason}")]
    DictionaryBounds { index: usize, reason: String },

    #[error("negative truncation level {0}")]
    NegativeLevel(f64),

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("non-integrable tail: {0}")]
    NonIntegrableTail(String),

    #[error("cannot parse scenario: {0}")]
    ScenarioParse(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    ScenarioInvalid(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures are distinguished from configuration problems.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite { .. } | Error::NoConvergence { .. } | Error::NonIntegrableTail(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidForm(_) => "invalid_form",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UntaggedAtom(_) => "untagged_atom",
            Error::EmptyDictionary => "empty_dictionary",
            Error::DictionaryBounds { .. } => "dictionary_bounds",
            Error::NegativeLevel(_) => "negative_level",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NoConvergence { .. } => "no_convergence",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Refused(_) => "refused",
            Error::NonIntegrableTail(_) => "non_integrable_tail",
            Error::ScenarioParse(_) => "scenario_parse",
            Error::ScenarioInvalid(_) => "scenario_invalid",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
