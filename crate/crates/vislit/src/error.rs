use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("missing input for stage {stage}: {path}")]
    MissingStageInput { stage: String, path: PathBuf },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error(transparent)]
    Chart(#[from] vislit_core::chartgen::ChartError),
    #[error(transparent)]
    Bank(#[from] vislit_core::qbank::QbankError),
    #[error(transparent)]
    Runner(#[from] vislit_core::runner::RunnerError),
    #[error(transparent)]
    Stats(#[from] vislit_core::stats::StatsError),
    #[error(transparent)]
    Report(#[from] vislit_core::report::ReportError),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Machine-readable error line written to stderr by the CLI.
#[derive(Debug, Serialize)]
pub struct ErrorSummary {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Error {
        Error::Io { context: context.into(), source }
    }

    pub fn format(context: impl Into<String>, message: impl ToString) -> Error {
        Error::Format { context: context.into(), message: message.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::MissingStageInput { .. } => "MissingStageInput",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::Io { .. } => "Io",
            Error::Format { .. } => "Format",
            Error::Chart(_) => "ConstraintUnsatisfiable",
            Error::Bank(_) => "ItemBank",
            Error::Runner(_) => "Runner",
            Error::Stats(_) => "Stats",
            Error::Report(_) => "Report",
        }
    }

    pub fn summary(&self) -> ErrorSummary {
        let (stage, path) = match self {
            Error::MissingStageInput { stage, path } => (Some(stage.clone()), Some(path.display().to_string())),
            _ => (None, None),
        };
        ErrorSummary { error: self.kind(), message: self.to_string(), stage, path }
    }
}
