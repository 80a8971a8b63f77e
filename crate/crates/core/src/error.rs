use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite operand: {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient on-policy samples: {context} has {got} rows, need at least {need}")]
    InsufficientSamples {
        context: String,
        got: usize,
        need: usize,
    },

    /// The dual solver exhausted its restarts; carries the best iterate seen.
    #[error("dual solver did not converge after {restarts} restarts (best alpha={alpha}, eta={eta}, value={value})")]
    SolverDidNotConverge {
        restarts: usize,
        alpha: f64,
        eta: f64,
        value: f64,
    },

    #[error("unsupported depth {0}: exact tree search supports depth <= 2")]
    UnsupportedDepth(usize),

    #[error("missing distribution metadata: {0}")]
    MissingMetadata(&'static str),

    #[error("malformed policy at {location}: {message}")]
    PolicyParse { location: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "non_finite",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::SolverDidNotConverge { .. } => "solver_not_converged",
            Error::UnsupportedDepth(_) => "unsupported_depth",
            Error::MissingMetadata(_) => "missing_metadata",
            Error::PolicyParse { .. } => "policy_parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
