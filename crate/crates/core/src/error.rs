use thiserror::Error;

/// Errors raised while loading configuration, norm, corpus and model files.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("unknown reference: {0}")]
    UnknownReference(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ConfigError::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub(crate) fn read_file(path: impl AsRef<std::path::Path>) -> Result<String, ConfigError> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| ConfigError::io(path, e))
}
