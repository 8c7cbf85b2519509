//! CLI error taxonomy mapped to exit codes, with machine-readable JSON on
//! stderr. Validation failures carry every problem found, not just the first.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, bad config file, unknown names. Exit 2.
    Config,
    /// Unreadable or malformed inputs, missing artifacts. Exit 3.
    Data,
    /// Model endpoint failures that survived retries. Exit 4.
    Backend,
    /// Lock conflicts and interrupted runs that left resumable state. Exit 5.
    PartialRun,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Backend => 4,
            ErrorKind::PartialRun => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Backend => "backend",
            ErrorKind::PartialRun => "partial_run",
        }
    }
}

#[derive(Debug)]
pub struct AppError {
    pub kind: ErrorKind,
    pub message: String,
    pub details: Vec<String>,
}

impl AppError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        AppError {
            kind,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Backend, message)
    }

    pub fn partial(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::PartialRun, message)
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    /// The stderr payload: {"error":{"code","exit","message","details"}}.
    pub fn to_stderr_json(&self) -> String {
        serde_json::json!({
            "error": {
                "code": self.kind.as_str(),
                "exit": self.kind.exit_code(),
                "message": self.message,
                "details": self.details,
            }
        })
        .to_string()
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for AppError {}

impl From<cope_core::corpus::CorpusError> for AppError {
    fn from(e: cope_core::corpus::CorpusError) -> Self {
        use cope_core::corpus::CorpusError::*;
        match &e {
            BadFraction(_) | BadChunkGeometry { .. } => AppError::config(e.to_string()),
            _ => AppError::data(e.to_string()),
        }
    }
}

impl From<cope_core::pipeline::PipelineError> for AppError {
    fn from(e: cope_core::pipeline::PipelineError) -> Self {
        use cope_core::pipeline::PipelineError::*;
        match &e {
            Locked { .. } => AppError::partial(e.to_string()),
            MissingBackend { .. } | Template(_) => AppError::config(e.to_string()),
            EmptyNote { .. } => AppError::data(e.to_string()),
            RunDir { .. } | Io(_) | Feature(_) => AppError::data(e.to_string()),
        }
    }
}

impl From<cope_core::backends::BackendError> for AppError {
    fn from(e: cope_core::backends::BackendError) -> Self {
        use cope_core::backends::BackendError::*;
        match &e {
            Config(_) | Request(_) => AppError::config(e.to_string()),
            _ => AppError::backend(e.to_string()),
        }
    }
}

impl From<cope_core::stats::StatsError> for AppError {
    fn from(e: cope_core::stats::StatsError) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<cope_core::synth::SynthError> for AppError {
    fn from(e: cope_core::synth::SynthError) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::data(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::data(format!("json: {e}"))
    }
}
