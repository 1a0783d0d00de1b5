use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    NonFinite(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("missing sample: {0}")]
    MissingSample(String),
    #[error("dataset integrity check failed: {0}")]
    Integrity(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(jamlab::Error),
}

impl From<jamlab::Error> for CliError {
    fn from(e: jamlab::Error) -> Self {
        match e {
            jamlab::Error::Numeric(m) => CliError::NonFinite(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonFinite(_) => 3,
            CliError::Architecture(_) => 4,
            CliError::MissingSample(_) => 5,
            _ => 1,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        CliError::Format { path: path.as_ref().display().to_string(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Reads a whole file, attaching the path to any error.
pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Vec<u8>> {
    std::fs::read(path.as_ref()).map_err(|e| CliError::io(path, e))
}

/// Writes a whole file, creating parent directories.
pub fn write_file(path: impl AsRef<std::path::Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
