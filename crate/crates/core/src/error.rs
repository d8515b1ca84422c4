use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate illuminant: {0}")]
    DegenerateIlluminant(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint format error: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure stems from the caller's input (arguments,
    /// files, paths) rather than from a numerical breakdown inside the
    /// library. The CLI maps this to its exit code.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid;
