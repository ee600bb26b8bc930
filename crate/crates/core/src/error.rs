use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("weight file format error: {0}")]
    Format(String),

    #[error("weight file does not match topology: {0}")]
    Topology(String),

    #[error("weight file truncated at byte offset {offset} while reading {what}")]
    Truncated { offset: u64, what: String },

    #[error("weight file corrupt: {0}")]
    Corrupt(String),

    #[error("unknown capture layer `{0}`")]
    Capture(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("image too small: {width}x{height} (minimum side is {min})")]
    ImageSize { width: u32, height: u32, min: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot encode image {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
