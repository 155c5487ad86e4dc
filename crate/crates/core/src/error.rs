use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("hypergeometric series does not terminate (a = {a}, c = {c})")]
    NonTerminating { a: i64, c: i64 },

    #[error("coefficient matrix has zero norm")]
    ZeroState,

    #[error("truncation tail {tail:e} exceeds {limit:e}; cutoff of at least {required_cutoff} is needed")]
    TailBound {
        tail: f64,
        limit: f64,
        required_cutoff: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonHermitian { asymmetry: f64 },

    #[error("negative probability {value:e} at index {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("validation battery is empty")]
    EmptyBattery,

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
