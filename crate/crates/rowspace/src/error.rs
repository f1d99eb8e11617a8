//! Crate-wide error type.

/// Errors raised by tensor ops, model construction, the auditor and the
/// training harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible extents, e.g. a matmul inner-dimension mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Wrong tensor rank for an operation.
    #[error("rank error: {0}")]
    Rank(String),

    /// An index (class label, coordinate) outside its valid range.
    #[error("index error: {0}")]
    Index(String),

    /// An API contract violation, e.g. backward on a non-scalar loss.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed config JSON.
    #[error("config parse error: {0}")]
    Parse(String),

    /// A config that parsed but violates an invariant.
    #[error("invalid config: field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// A config/model combination that cannot be built.
    #[error("build error: {0}")]
    Build(String),

    /// A checkpoint file with the wrong magic or version.
    #[error("checkpoint format error: {0}")]
    Format(String),

    /// A truncated or internally inconsistent checkpoint file.
    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
