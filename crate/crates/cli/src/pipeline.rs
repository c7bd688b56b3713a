//! Stage execution and the hash manifest of a run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use histoprompt_core::curation::curate;
use histoprompt_core::data::{load_embeddings, manifest_path_for, DatasetManifest};
use histoprompt_core::jsonl;
use histoprompt_core::metrics::{compute_fid, compute_improved_pr, MetricReport, PRReport};
use histoprompt_core::morphology::{assign, build_prompt_with, kmeans_fit, select_k, ClusterModel};
use histoprompt_core::sampling::{
    aggregate_results, balance, make_grid, split, BalancedManifest, GridResult, PromptQuota,
};
use histoprompt_core::seeding::{derive_seed, rng};
use histoprompt_core::stats::{
    analyze_readers, group_lead_times, leadtime_analysis, pairwise_kappa_summary, read_responses_csv, KappaSubset,
    KappaSummary, LeadTimeReport, ReaderPerformance,
};
use histoprompt_study::{build_study, prepare_images, StudyDefinition};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::config::{Artifact, PipelineConfig};
use crate::error::CliError;

pub const VERSION: &str = concat!("histoprompt ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Curate,
    Cluster,
    Assign,
    Prompt,
    Balance,
    Split,
    Metrics,
    Grid,
    Aggregate,
    Study,
    Stats,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 11] = [
        Stage::Curate,
        Stage::Cluster,
        Stage::Assign,
        Stage::Prompt,
        Stage::Balance,
        Stage::Split,
        Stage::Metrics,
        Stage::Grid,
        Stage::Aggregate,
        Stage::Study,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Curate => "curate",
            Stage::Cluster => "cluster",
            Stage::Assign => "assign",
            Stage::Prompt => "prompt",
            Stage::Balance => "balance",
            Stage::Split => "split",
            Stage::Metrics => "metrics",
            Stage::Grid => "grid",
            Stage::Aggregate => "aggregate",
            Stage::Study => "study",
            Stage::Stats => "stats",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CliError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Everything needed to re-execute a run: tool version, resolved config and
/// the hash of every file read or written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: BTreeMap<String, Value>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// `(stage, path) -> sha256` over every output.
    pub fn output_hashes(&self) -> BTreeMap<(Stage, String), String> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter().map(move |f| ((s.stage, file_name(&f.path)), f.sha256.clone())))
            .collect()
    }
}

fn file_name(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Files hash their bytes; directories hash the sorted list of
/// `(relative path, file hash)` pairs.
pub fn sha256_path(path: &Path) -> Result<String, CliError> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut h = Sha256::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::io(path, e.into()))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(path).unwrap_or(entry.path());
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(sha256_file(entry.path())?.as_bytes());
            h.update([b'\n']);
        }
    }
    Ok(format!("{:x}", h.finalize()))
}

fn hash_all(paths: &[PathBuf]) -> Result<Vec<FileHash>, CliError> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.to_string_lossy().into_owned(),
                sha256: sha256_path(p)?,
            })
        })
        .collect()
}

fn require(stage: Stage, key: &str, path: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let path = path.clone().ok_or_else(|| CliError::MissingDependency {
        stage: stage.to_string(),
        file: format!("<paths.{key} not set>"),
    })?;
    exists(stage, path)
}

fn exists(stage: Stage, path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingDependency {
            stage: stage.to_string(),
            file: path.display().to_string(),
        })
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_manifest(path: &Path, m: &DatasetManifest) -> Result<Vec<PathBuf>, CliError> {
    ensure_parent(path)?;
    m.write_jsonl(path)?;
    let mut written = vec![path.to_path_buf()];
    let log = provenance_path(path);
    if log.exists() {
        written.push(log);
    }
    Ok(written)
}

fn provenance_path(manifest: &Path) -> PathBuf {
    let stem = manifest.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    manifest.with_file_name(format!("{stem}.provenance.txt"))
}

/// Reads a manifest together with its provenance log.
fn read_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::read_jsonl(path)?)
}

/// Inputs a stage read, outputs it wrote, and the seed it used.
struct Done {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

pub fn fid_report(cfg: &PipelineConfig) -> Result<(MetricReport, Vec<PathBuf>), CliError> {
    let real = require(Stage::Metrics, "real_features", &cfg.paths.real_features)?;
    let synth = require(Stage::Metrics, "synth_features", &cfg.paths.synth_features)?;
    let report = compute_fid(&load_embeddings(&real)?, &load_embeddings(&synth)?)?;
    Ok((report, vec![real, synth]))
}

pub fn pr_report(cfg: &PipelineConfig) -> Result<(PRReport, Vec<PathBuf>), CliError> {
    let real = require(Stage::Metrics, "real_features", &cfg.paths.real_features)?;
    let synth = require(Stage::Metrics, "synth_features", &cfg.paths.synth_features)?;
    let report = compute_improved_pr(&load_embeddings(&real)?, &load_embeddings(&synth)?, cfg.metrics.k)?;
    Ok((report, vec![real, synth]))
}

fn responses(cfg: &PipelineConfig) -> Result<(Vec<histoprompt_core::stats::ResponseRecord>, PathBuf), CliError> {
    let path = require(Stage::Stats, "responses", &cfg.paths.responses)?;
    let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    Ok((read_responses_csv(file)?, path))
}

pub fn readers_report(cfg: &PipelineConfig) -> Result<Vec<ReaderPerformance>, CliError> {
    Ok(analyze_readers(&responses(cfg)?.0)?)
}

/// Agreement over all items and within each ground-truth class.
pub fn kappa_report(cfg: &PipelineConfig) -> Result<Vec<KappaSummary>, CliError> {
    let (records, _) = responses(cfg)?;
    [KappaSubset::All, KappaSubset::TruthReal, KappaSubset::TruthSynthetic]
        .into_iter()
        .map(|s| pairwise_kappa_summary(&records, s).map_err(CliError::from))
        .collect()
}

pub fn leadtime_report(cfg: &PipelineConfig) -> Result<LeadTimeReport, CliError> {
    let (records, _) = responses(cfg)?;
    Ok(leadtime_analysis(&group_lead_times(&records))?)
}

/// Rebuilds quotas from a balanced manifest read back from disk.
fn balanced_from(manifest: DatasetManifest, seed: u64) -> Result<BalancedManifest, CliError> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in &manifest.records {
        let prompt = r
            .prompt
            .clone()
            .ok_or_else(|| histoprompt_core::sampling::SamplingError::MissingPrompt(r.id.clone()))?;
        *counts.entry((r.label.clone(), prompt)).or_default() += 1;
    }
    let quotas = counts
        .into_iter()
        .map(|((label, prompt), n)| PromptQuota {
            label,
            prompt,
            population: n,
            quota: n,
        })
        .collect();
    Ok(BalancedManifest {
        manifest,
        quotas,
        seed,
    })
}

fn image_files(stage: Stage, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::io(dir, e.into()))?;
        let is_image = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"));
        if entry.file_type().is_file() && is_image {
            files.push(entry.into_path());
        }
    }
    if files.is_empty() {
        return Err(CliError::MissingDependency {
            stage: stage.to_string(),
            file: format!("{} (no images)", dir.display()),
        });
    }
    Ok(files)
}

fn pick(files: &[PathBuf], n: usize, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if files.len() < n {
        return Err(CliError::InvalidInput {
            path: dir.to_path_buf(),
            message: format!("{} images, {n} required", files.len()),
        });
    }
    let mut idx = sample(&mut rng(seed), files.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| files[i].clone()).collect())
}

/// Builds the study definition with display copies next to it; image paths
/// are stored relative to the definition file.
pub fn prepare_study(cfg: &PipelineConfig) -> Result<(StudyDefinition, PathBuf, Vec<PathBuf>), CliError> {
    let stage = Stage::Study;
    let real_dir = require(stage, "real_images", &cfg.paths.real_images)?;
    let synth_dir = require(stage, "synth_images", &cfg.paths.synth_images)?;
    let seed = cfg.seed.study;
    let real = pick(&image_files(stage, &real_dir)?, cfg.study.n_real, derive_seed(seed, &[0]), &real_dir)?;
    let synth = pick(&image_files(stage, &synth_dir)?, cfg.study.n_synth, derive_seed(seed, &[1]), &synth_dir)?;
    let def = build_study(&cfg.study.id, &real, &synth, seed);
    def.validate()?;

    let def_path = cfg.paths.output(Artifact::StudyDefinition);
    ensure_parent(&def_path)?;
    let base = def_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let image_dir = base.join(format!("{}_images", cfg.study.id));
    let mut prepared = prepare_images(&def, &image_dir)?;
    for item in &mut prepared.items {
        if let Ok(rel) = item.image_path.strip_prefix(&base) {
            item.image_path = rel.to_path_buf();
        }
    }
    prepared.save(&def_path)?;
    Ok((prepared, image_dir, vec![real_dir, synth_dir]))
}

fn execute(stage: Stage, cfg: &PipelineConfig) -> Result<Done, CliError> {
    let p = &cfg.paths;
    let done = match stage {
        Stage::Curate => {
            let input = require(stage, "patches", &p.patches)?;
            let (manifest, report) = curate(&input, &cfg.curate)?;
            let report_path = p.output(Artifact::CurationReport);
            ensure_parent(&report_path)?;
            report.write_jsonl(&report_path)?;
            let mut outputs = write_manifest(&p.output(Artifact::Curated), &manifest)?;
            outputs.push(report_path);
            tracing::info!(kept = report.accepted_count(), rejected = report.rejected_count(), "curation done");
            Done {
                seed: None,
                inputs: vec![input],
                outputs,
            }
        }
        Stage::Cluster => {
            let features = require(stage, "features", &p.features)?;
            let fs = load_embeddings(&features)?;
            let seed = cfg.seed.cluster;
            let model_path = p.output(Artifact::ClusterModel);
            let mut outputs = vec![model_path.clone()];
            let model = match cfg.cluster.k {
                Some(k) => kmeans_fit(&fs, k, seed)?,
                None => {
                    let (model, report) = select_k(&fs, cfg.cluster.k_min, cfg.cluster.k_max, seed)?;
                    let sd_path = p.output(Artifact::SdIndex);
                    write_text(&sd_path, &report.to_csv())?;
                    outputs.push(sd_path);
                    tracing::info!(k = report.chosen_k, "SD index selected cluster count");
                    model
                }
            };
            write_text(&model_path, &(model.to_json() + "\n"))?;
            Done {
                seed: Some(seed),
                inputs: vec![features],
                outputs,
            }
        }
        Stage::Assign => {
            let features = require(stage, "features", &p.features)?;
            let model_path = exists(stage, p.output(Artifact::ClusterModel))?;
            let text = fs::read_to_string(&model_path).map_err(|e| CliError::io(&model_path, e))?;
            let model = ClusterModel::from_json(&text)?;
            let fs = load_embeddings(&features)?;
            let sibling = manifest_path_for(&features);
            let mut manifest = if sibling.exists() { read_manifest(&sibling)? } else { fs.manifest() };
            let clusters = assign(&model, &fs)?;
            for (record, c) in manifest.records.iter_mut().zip(clusters) {
                record.cluster = Some(c);
            }
            manifest.provenance.push(format!("assign k={} seed={}", model.k, model.seed));
            let outputs = write_manifest(&p.output(Artifact::Assigned), &manifest)?;
            Done {
                seed: None,
                inputs: vec![features, model_path],
                outputs,
            }
        }
        Stage::Prompt => {
            let input = exists(stage, p.output(Artifact::Assigned))?;
            let mut manifest = read_manifest(&input)?;
            let format = cfg.prompt.format();
            for record in &mut manifest.records {
                let prompt = build_prompt_with(&record.label, record.cluster, cfg.prompt.style, format)?;
                record.prompt = Some(prompt.text);
            }
            manifest.provenance.push(format!(
                "prompt style={:?} format={:?} base={}",
                cfg.prompt.style, format.index_format, format.index_base
            ));
            let outputs = write_manifest(&p.output(Artifact::Prompts), &manifest)?;
            Done {
                seed: None,
                inputs: vec![input],
                outputs,
            }
        }
        Stage::Balance => {
            let input = exists(stage, p.output(Artifact::Prompts))?;
            let seed = cfg.seed.balance;
            let balanced = balance(
                &read_manifest(&input)?,
                cfg.balance.prompts_per_class,
                cfg.balance.total(),
                seed,
            )?;
            let outputs = write_manifest(&p.output(Artifact::Balanced), &balanced.manifest)?;
            Done {
                seed: Some(seed),
                inputs: vec![input],
                outputs,
            }
        }
        Stage::Split => {
            let input = exists(stage, p.output(Artifact::Balanced))?;
            let seed = cfg.seed.split;
            let balanced = balanced_from(read_manifest(&input)?, cfg.seed.balance)?;
            let (train, val) = split(&balanced, cfg.balance.train, cfg.balance.val, seed)?;
            let mut outputs = write_manifest(&p.output(Artifact::Train), &train)?;
            outputs.extend(write_manifest(&p.output(Artifact::Val), &val)?);
            Done {
                seed: Some(seed),
                inputs: vec![input],
                outputs,
            }
        }
        Stage::Metrics => {
            let (fid, inputs) = fid_report(cfg)?;
            let (pr, _) = pr_report(cfg)?;
            let (fid_path, pr_path) = (p.output(Artifact::Fid), p.output(Artifact::Pr));
            write_json(&fid_path, &fid)?;
            write_json(&pr_path, &pr)?;
            Done {
                seed: None,
                inputs,
                outputs: vec![fid_path, pr_path],
            }
        }
        Stage::Grid => {
            let real = match &p.real_pool {
                Some(_) => require(stage, "real_pool", &p.real_pool)?,
                None => exists(stage, p.output(Artifact::Train))?,
            };
            let synth = require(stage, "synth_pool", &p.synth_pool)?;
            let seed = cfg.seed.grid;
            let plans = make_grid(&cfg.grid, seed, &read_manifest(&real)?, &read_manifest(&synth)?)?;
            let out = p.output(Artifact::GridPlans);
            ensure_parent(&out)?;
            jsonl::write(&out, &plans).map_err(|e| CliError::io(&out, e))?;
            Done {
                seed: Some(seed),
                inputs: vec![real, synth],
                outputs: vec![out],
            }
        }
        Stage::Aggregate => {
            let input = require(stage, "grid_results", &p.grid_results)?;
            let results: Vec<GridResult> = jsonl::read(&input).map_err(|e| CliError::io(&input, e))?;
            let summary = aggregate_results(&cfg.grid, &results)?;
            let out = p.output(Artifact::GridSummary);
            write_text(&out, &summary.to_csv())?;
            Done {
                seed: None,
                inputs: vec![input],
                outputs: vec![out],
            }
        }
        Stage::Study => {
            let (_, image_dir, inputs) = prepare_study(cfg)?;
            Done {
                seed: Some(cfg.seed.study),
                inputs,
                outputs: vec![p.output(Artifact::StudyDefinition), image_dir],
            }
        }
        Stage::Stats => {
            let (_, input) = responses(cfg)?;
            let outputs = vec![p.output(Artifact::Readers), p.output(Artifact::Kappa), p.output(Artifact::LeadTime)];
            write_json(&outputs[0], &readers_report(cfg)?)?;
            write_json(&outputs[1], &kappa_report(cfg)?)?;
            write_json(&outputs[2], &leadtime_report(cfg)?)?;
            Done {
                seed: None,
                inputs: vec![input],
                outputs,
            }
        }
    };
    Ok(done)
}

/// Runs one stage and hashes what it touched.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageRecord, CliError> {
    tracing::info!(%stage, "stage started");
    let done = execute(stage, cfg)?;
    Ok(StageRecord {
        stage,
        seed: done.seed,
        inputs: hash_all(&done.inputs)?,
        outputs: hash_all(&done.outputs)?,
    })
}

pub fn manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.out_dir.join("run_manifest.json")
}

/// Runs the requested stages in dependency order and writes the run manifest
/// into the output directory.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    flat: &BTreeMap<String, Value>,
    stages: &[Stage],
) -> Result<RunManifest, CliError> {
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    let out_dir = &cfg.paths.out_dir;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut manifest = RunManifest {
        version: VERSION.to_string(),
        config: flat.clone(),
        stages: Vec::new(),
    };
    for stage in ordered {
        manifest.stages.push(run_stage(stage, cfg)?);
    }
    write_json(&manifest_path(cfg), &manifest)?;
    Ok(manifest)
}
