//! Command-line pipeline: curation, clustering, prompting, balancing,
//! metrics, grid sampling, reader study and its analysis.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{load_config, Artifact, ConfigError, PipelineConfig, Resolved};
pub use error::{exit, CliError};
pub use pipeline::{run_pipeline, run_stage, RunManifest, Stage, StageRecord, VERSION};
