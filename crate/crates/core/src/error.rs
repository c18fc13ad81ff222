use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("test unreliable: {failed} of {total} resamples failed")]
    TestUnreliable { failed: usize, total: usize },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the error stems from the data rather than from numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Io { .. }
                | Error::Csv(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Domain(_)
                | Error::UnsupportedDesign(_)
                | Error::DegenerateData(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
