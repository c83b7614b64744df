use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomError {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("mismatch between scan and parameter definition: {0}")]
    Mismatch(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: String,
        line: u64,
        reason: String,
    },

    #[error("bootstrap replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<HomError>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl HomError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        HomError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HomError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HomError>;
