use std::io;
use std::path::PathBuf;

/// Failures of the file formats, configuration and runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Malformed container or checkpoint bytes.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Core(#[from] bbnet_core::Error),
    #[error("config error: {0}")]
    Config(String),
    /// Bad command-line usage.
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset: offset as u64,
            message: message.into(),
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Core(e) => match e {
                bbnet_core::Error::InvalidInput(_) => "invalid-input",
                bbnet_core::Error::InvalidParameter(_) => "invalid-parameter",
                bbnet_core::Error::DegenerateSignal(_) => "degenerate-signal",
                bbnet_core::Error::DegenerateGraph(_) => "degenerate-graph",
                bbnet_core::Error::Shape(_) => "shape",
                bbnet_core::Error::Statistics(_) => "statistics",
                bbnet_core::Error::Usage(_) => "usage",
                bbnet_core::Error::TrainingAborted(_) => "training-aborted",
            },
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
        }
    }

    /// One-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        let mut record = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        match self {
            Error::Format { offset, .. } => record["offset"] = (*offset).into(),
            Error::Io { path, .. } => record["path"] = path.display().to_string().into(),
            _ => {}
        }
        record.to_string()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
