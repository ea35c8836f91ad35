use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A parameter update produced a non-finite value. Learners treat this as divergence.
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("no stored transitions for (state {state}, action {action})")]
    MissingKey { state: usize, action: usize },

    #[error("unsupported offset: {0}")]
    UnsupportedOffset(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("relative value iteration did not converge in {iterations} iterations (last span {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("gap does not change sign on [{lo}, {hi}] (gap {gap_lo:e} .. {gap_hi:e})")]
    NotBracketed {
        lo: f64,
        hi: f64,
        gap_lo: f64,
        gap_hi: f64,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::NumericOverflow(_))
    }
}
