use thiserror::Error;

/// Errors for the volume file format. Each header defect gets its own code so
/// callers can distinguish a truncated payload from a corrupted header.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum VolumeError {
    #[error("bad magic: expected AVOL")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown dtype code {0}")]
    BadDtype(u8),
    #[error("dtype mismatch: file holds {found}, requested {requested}")]
    DtypeMismatch { found: &'static str, requested: &'static str },
    #[error("bad dims: {0}")]
    BadDims(String),
    #[error("reserved header byte is nonzero")]
    BadReserved,
    #[error("payload short: expected {expected} bytes, found {found}")]
    PayloadShort { expected: usize, found: usize },
    #[error("payload long: {extra} trailing bytes")]
    PayloadLong { extra: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape or axis inconsistency.
    #[error("shape error: {0}")]
    Shape(String),
    /// Invalid configuration or input data (caught before any work starts).
    #[error("validation error: {0}")]
    Validation(String),
    /// Volume file format violation.
    #[error("volume format error: {0}")]
    Volume(#[from] VolumeError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Malformed JSON/CSV artifact.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
    /// Numeric failure: non-finite loss, degenerate variance, undefined metric.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().display().to_string(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
