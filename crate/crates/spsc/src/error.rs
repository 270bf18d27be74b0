use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates its documented invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Matrix/vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An operation that requires a symmetric matrix received an asymmetric one.
    #[error("matrix not symmetric (max asymmetry {max_dev:.3e} > tol {tol:.3e})")]
    NotSymmetric { max_dev: f64, tol: f64 },

    /// Attempted to step the environment past its horizon.
    #[error("environment stepped past horizon T={0}")]
    PastHorizon(usize),

    /// Probe coverage mask selects no coordinates.
    #[error("empty probe coverage mask")]
    EmptyCoverage,

    /// The variance estimator needs at least 4 probe records.
    #[error("too few probe records for variance estimation: {0} < 4")]
    TooFewProbes(usize),

    /// An operation that needs non-empty detector buffers saw an empty one.
    #[error("detector buffer empty; statistic undefined")]
    EmptyBuffer,

    /// Unknown ablation kind / method name at the CLI boundary.
    #[error("unknown {what}: {got}")]
    Unknown { what: &'static str, got: String },

    /// I/O failure with path context.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Serialization failure.
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
