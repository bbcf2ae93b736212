use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Divergence, degeneracy or a failed check; `detail` goes to `failure.json`.
    #[error("{kind}: {msg}")]
    Numerical {
        kind: &'static str,
        msg: String,
        detail: serde_json::Value,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn numerical(kind: &'static str, msg: impl ToString) -> Self {
        Self::Numerical {
            kind,
            msg: msg.to_string(),
            detail: serde_json::Value::Null,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) | Self::Invalid { .. } | Self::Usage(_) => 1,
            Self::Numerical { .. } => 2,
            Self::Io { .. } => 3,
        }
    }
}
