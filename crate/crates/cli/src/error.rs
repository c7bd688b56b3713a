use std::io;
use std::path::{Path, PathBuf};

use histoprompt_core::curation::CurationError;
use histoprompt_core::data::DataError;
use histoprompt_core::metrics::MetricsError;
use histoprompt_core::morphology::ClusterError;
use histoprompt_core::sampling::SamplingError;
use histoprompt_core::stats::StatsError;
use histoprompt_study::StudyError;
use thiserror::Error;

use crate::config::ConfigError;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const MISSING_DEPENDENCY: i32 = 3;
    pub const RUNTIME: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage}: missing input {file}")]
    MissingDependency { stage: String, file: String },
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("{path}: {message}")]
    InvalidInput { path: PathBuf, message: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::InvalidData {
            return CliError::InvalidInput {
                path: path.to_path_buf(),
                message: source.to_string(),
            };
        }
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Bad configuration or input content is a validation error; failures
    /// of the environment or the numerics are runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingDependency { .. } => exit::MISSING_DEPENDENCY,
            CliError::Io { .. }
            | CliError::Data(DataError::Io { .. })
            | CliError::Curation(CurationError::Io { .. })
            | CliError::Metrics(MetricsError::NumericalFailure(_))
            | CliError::Study(StudyError::Io { .. }) => exit::RUNTIME,
            _ => exit::VALIDATION,
        }
    }
}
