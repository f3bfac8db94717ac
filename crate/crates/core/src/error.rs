use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants map onto the error categories that operators see (the CLI turns
/// [`Error::category`] into an exit code, the service into an HTTP status).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("missing predictions for {} instance(s): {}", .instance_ids.len(), preview(.instance_ids))]
    MissingPredictions { instance_ids: Vec<String> },

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("statistics error: {0}")]
    Stat(String),

    #[error("degenerate ranking: {0}")]
    DegenerateRanking(String),

    #[error("curation error: {0}")]
    Curation(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("duplicate record at {location}: {message}")]
    Duplicate { location: String, message: String },

    #[error("integrity error at line {line}: {message} ({recoverable_entries} leading entries are intact)")]
    Integrity {
        line: usize,
        message: String,
        recoverable_entries: usize,
    },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short name of the error category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid",
            Error::Alignment(_) => "alignment",
            Error::Manifest(_) => "manifest",
            Error::MissingPredictions { .. } => "missing-predictions",
            Error::Selection(_) => "selection",
            Error::Stat(_) => "stat",
            Error::DegenerateRanking(_) => "degenerate-ranking",
            Error::Curation(_) => "curation",
            Error::Parse { .. } => "parse",
            Error::Duplicate { .. } => "duplicate",
            Error::Integrity { .. } => "integrity",
            Error::Io { .. } => "io",
        }
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 5;
    let mut out = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}
