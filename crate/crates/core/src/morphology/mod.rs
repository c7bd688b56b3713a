//! Morphology types: k-means over image embeddings, SD-index model selection,
//! and caption rendering.

mod kmeans;
mod prompt;
mod validity;
pub mod words;

use thiserror::Error;

pub use kmeans::{
    assign, fit_matrix, kmeans_fit, ClusterModel, KMeansOptions, DEFAULT_MAX_ITER, DEFAULT_N_INIT, DEFAULT_TOL,
};
pub use prompt::{
    build_prompt, build_prompt_with, parse_prompt, strip_prompt, strip_prompt_with, IndexFormat,
    Prompt, PromptFormat, PromptStyle,
};
pub use validity::{sd_index, select_k, SdComponents, SdIndexReport, SdRow, DEFAULT_K_MAX, DEFAULT_K_MIN};

use crate::data::{DatasetManifest, FeatureSet};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot fit {k} clusters on {n} points")]
    TooFewPoints { n: usize, k: usize },
    #[error("invalid cluster count {0}")]
    InvalidK(usize),
    #[error("invalid sweep [{k_min}, {k_max}] for {n} points")]
    InvalidSweep { k_min: usize, k_max: usize, n: usize },
    #[error("model has dimension {model}, data has {data}")]
    DimensionMismatch { model: usize, data: usize },
    #[error("data has zero total variance")]
    DegenerateData,
    #[error("two centroids coincide")]
    CoincidentCentroids,
    #[error("enriched prompt requires a cluster index")]
    MissingCluster,
    #[error("prompt does not match a known template: {0:?}")]
    MalformedPrompt(String),
    #[error("malformed cluster model: {0}")]
    MalformedModel(String),
    #[error("manifest has {manifest} records but the feature set has {features} rows")]
    ManifestMismatch { manifest: usize, features: usize },
}

/// Assigns every row to a morphology type and writes cluster and prompt into
/// the aligned manifest records.
pub fn annotate_manifest(
    manifest: &DatasetManifest,
    fs: &FeatureSet,
    model: &ClusterModel,
    style: PromptStyle,
    format: PromptFormat,
) -> Result<DatasetManifest, ClusterError> {
    if manifest.len() != fs.n() {
        return Err(ClusterError::ManifestMismatch {
            manifest: manifest.len(),
            features: fs.n(),
        });
    }
    let clusters = assign(model, fs)?;
    let mut out = manifest.clone();
    for (record, cluster) in out.records.iter_mut().zip(clusters) {
        let prompt = build_prompt_with(&record.label, Some(cluster), style, format)?;
        record.cluster = Some(cluster);
        record.prompt = Some(prompt.text);
    }
    out.provenance.push(format!(
        "prompt style={style:?} k={} format={:?} base={}",
        model.k, format.index_format, format.index_base
    ));
    Ok(out)
}
