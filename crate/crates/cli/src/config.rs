//! Pipeline configuration: built-in defaults, overlaid by a JSON file with
//! flat dotted keys, overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use histoprompt_core::curation::CurationThresholds;
use histoprompt_core::morphology::{IndexFormat, PromptFormat, PromptStyle, DEFAULT_K_MAX, DEFAULT_K_MIN};
use histoprompt_core::sampling::GridSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key:?}: {message}")]
    TypeError { key: String, message: String },
    #[error("cannot read config file {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("invalid override {0:?}; expected KEY=VALUE")]
    BadOverride(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub cluster: u64,
    pub balance: u64,
    pub split: u64,
    pub grid: u64,
    pub study: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            cluster: 0,
            balance: 1,
            split: 2,
            grid: 3,
            study: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Fixed cluster count; skips the SD-index sweep when set.
    pub k: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub style: PromptStyle,
    pub index_format: IndexFormat,
    pub index_base: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            style: PromptStyle::Enriched,
            index_format: IndexFormat::Words,
            index_base: 0,
        }
    }
}

impl PromptConfig {
    pub fn format(&self) -> PromptFormat {
        PromptFormat {
            index_format: self.index_format,
            index_base: self.index_base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    pub prompts_per_class: usize,
    pub train: usize,
    pub val: usize,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            prompts_per_class: 21,
            train: 50_000,
            val: 1_000,
        }
    }
}

impl BalanceConfig {
    pub fn total(&self) -> usize {
        self.train + self.val
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub k: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            k: histoprompt_core::metrics::DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub id: String,
    pub n_real: usize,
    pub n_synth: usize,
    pub addr: String,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            id: "vtt".into(),
            n_real: histoprompt_study::definition::DEFAULT_N_REAL,
            n_synth: histoprompt_study::definition::DEFAULT_N_SYNTH,
            addr: "127.0.0.1:8080".into(),
        }
    }
}

/// Files produced by the stages. Unset entries land in `out_dir` under
/// [`Artifact::file_name`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Curated,
    CurationReport,
    ClusterModel,
    SdIndex,
    Assigned,
    Prompts,
    Balanced,
    Train,
    Val,
    Fid,
    Pr,
    GridPlans,
    GridSummary,
    StudyDefinition,
    Readers,
    Kappa,
    LeadTime,
}

impl Artifact {
    pub fn file_name(self) -> &'static str {
        match self {
            Artifact::Curated => "curated.jsonl",
            Artifact::CurationReport => "curation_report.jsonl",
            Artifact::ClusterModel => "cluster_model.json",
            Artifact::SdIndex => "sd_index.csv",
            Artifact::Assigned => "assigned.jsonl",
            Artifact::Prompts => "prompts.jsonl",
            Artifact::Balanced => "balanced.jsonl",
            Artifact::Train => "train.jsonl",
            Artifact::Val => "val.jsonl",
            Artifact::Fid => "fid.json",
            Artifact::Pr => "pr.json",
            Artifact::GridPlans => "grid_plans.jsonl",
            Artifact::GridSummary => "grid_summary.csv",
            Artifact::StudyDefinition => "study.json",
            Artifact::Readers => "readers.json",
            Artifact::Kappa => "kappa.json",
            Artifact::LeadTime => "leadtime.json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    // Inputs.
    pub patches: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub real_features: Option<PathBuf>,
    pub synth_features: Option<PathBuf>,
    /// Real pool for the grid; defaults to the training split.
    pub real_pool: Option<PathBuf>,
    pub synth_pool: Option<PathBuf>,
    pub grid_results: Option<PathBuf>,
    pub real_images: Option<PathBuf>,
    pub synth_images: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub study_data: Option<PathBuf>,
    pub ui_assets: Option<PathBuf>,
    // Outputs.
    pub curated: Option<PathBuf>,
    pub curation_report: Option<PathBuf>,
    pub cluster_model: Option<PathBuf>,
    pub sd_index: Option<PathBuf>,
    pub assigned: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub balanced: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub fid: Option<PathBuf>,
    pub pr: Option<PathBuf>,
    pub grid_plans: Option<PathBuf>,
    pub grid_summary: Option<PathBuf>,
    pub study_definition: Option<PathBuf>,
    pub readers: Option<PathBuf>,
    pub kappa: Option<PathBuf>,
    pub leadtime: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            patches: None,
            features: None,
            real_features: None,
            synth_features: None,
            real_pool: None,
            synth_pool: None,
            grid_results: None,
            real_images: None,
            synth_images: None,
            responses: None,
            study_data: None,
            ui_assets: None,
            curated: None,
            curation_report: None,
            cluster_model: None,
            sd_index: None,
            assigned: None,
            prompts: None,
            balanced: None,
            train: None,
            val: None,
            fid: None,
            pr: None,
            grid_plans: None,
            grid_summary: None,
            study_definition: None,
            readers: None,
            kappa: None,
            leadtime: None,
        }
    }
}

impl Paths {
    /// Where an artifact is written (or read by a later stage).
    pub fn output(&self, a: Artifact) -> PathBuf {
        let explicit = match a {
            Artifact::Curated => &self.curated,
            Artifact::CurationReport => &self.curation_report,
            Artifact::ClusterModel => &self.cluster_model,
            Artifact::SdIndex => &self.sd_index,
            Artifact::Assigned => &self.assigned,
            Artifact::Prompts => &self.prompts,
            Artifact::Balanced => &self.balanced,
            Artifact::Train => &self.train,
            Artifact::Val => &self.val,
            Artifact::Fid => &self.fid,
            Artifact::Pr => &self.pr,
            Artifact::GridPlans => &self.grid_plans,
            Artifact::GridSummary => &self.grid_summary,
            Artifact::StudyDefinition => &self.study_definition,
            Artifact::Readers => &self.readers,
            Artifact::Kappa => &self.kappa,
            Artifact::LeadTime => &self.leadtime,
        };
        explicit.clone().unwrap_or_else(|| self.out_dir.join(a.file_name()))
    }

    pub fn study_data(&self) -> PathBuf {
        self.study_data.clone().unwrap_or_else(|| self.out_dir.join("study_data"))
    }
}

/// Everything the pipeline needs. Defaults mirror the published setup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Seeds,
    pub curate: CurationThresholds,
    pub cluster: ClusterConfig,
    pub prompt: PromptConfig,
    pub balance: BalanceConfig,
    pub metrics: MetricsConfig,
    pub grid: GridSpec,
    pub study: StudyConfig,
    pub paths: Paths,
}

/// Resolved configuration together with its flat key/value echo.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub flat: BTreeMap<String, Value>,
}

pub type Overrides = Vec<(String, Value)>;

fn flatten_into(prefix: &str, value: Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf);
        }
    }
}

pub fn flatten(value: Value) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    flatten_into("", value, &mut out);
    out
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), value.clone());
            } else {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("keys never nest under a leaf");
            }
        }
    }
    Value::Object(root)
}

/// Parses `KEY=VALUE`; the value is JSON when it parses as such, else a string.
pub fn parse_override(text: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = text
        .split_once('=')
        .filter(|(k, _)| !k.trim().is_empty())
        .ok_or_else(|| ConfigError::BadOverride(text.to_string()))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn read_file(path: &Path) -> Result<Overrides, ConfigError> {
    let unreadable = |message: String| ConfigError::Unreadable {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))?;
    if !value.is_object() {
        return Err(unreadable("top level must be a JSON object".into()));
    }
    Ok(flatten(value).into_iter().collect())
}

/// Layers defaults, then `file`, then `flags` (later wins).
pub fn load_config(file: Option<&Path>, flags: &[(String, Value)]) -> Result<Resolved, ConfigError> {
    let defaults = flatten(serde_json::to_value(PipelineConfig::default()).expect("config serializes"));
    let mut layers: Overrides = match file {
        Some(p) => read_file(p)?,
        None => Vec::new(),
    };
    layers.extend(flags.iter().cloned());

    let mut flat = defaults.clone();
    for (key, value) in &layers {
        if !defaults.contains_key(key) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
        flat.insert(key.clone(), value.clone());
    }
    match serde_json::from_value::<PipelineConfig>(unflatten(&flat)) {
        Ok(config) => Ok(Resolved { config, flat }),
        Err(whole) => {
            // Pin the failure on the first key that breaks the defaults alone.
            for (key, value) in layers.iter().rev() {
                let mut probe = defaults.clone();
                probe.insert(key.clone(), value.clone());
                if let Err(e) = serde_json::from_value::<PipelineConfig>(unflatten(&probe)) {
                    return Err(ConfigError::TypeError {
                        key: key.clone(),
                        message: e.to_string(),
                    });
                }
            }
            Err(ConfigError::TypeError {
                key: String::new(),
                message: whole.to_string(),
            })
        }
    }
}
