//! Command-line surface. Every flag is sugar for a dotted config key, so
//! flags, `--set KEY=VALUE` and the config file share one precedence chain.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use histoprompt_study::{StudyDefinition, StudyService, SystemClock};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_config, parse_override, Artifact, Overrides, Resolved};
use crate::error::{exit, CliError};
use crate::pipeline::{self, run_pipeline, run_stage, Stage};

#[derive(Debug, Parser)]
#[command(name = "histoprompt", version, about = "Morphology-enriched prompt building and evaluation pipeline")]
pub struct Cli {
    /// JSON config file with flat dotted keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable); VALUE is JSON or a bare string.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Directory for artifacts without an explicit path.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter patches by background, darkness, variation, blur and shape count.
    Curate {
        /// Patch directory, one subdirectory per class label.
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
        /// Manifest of the patches that pass (JSONL).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-patch statistics and verdicts (JSONL).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit k-means, choosing k by SD index unless --k is given.
    Cluster {
        /// Embeddings (.emb).
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SD-index table (CSV).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Fixed cluster count; skips the sweep.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Label every embedding row with its nearest cluster.
    Assign {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Manifest with a cluster index per record.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the caption of every manifest record.
    Prompt {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        style: Option<StyleArg>,
        #[arg(long, value_enum)]
        index_format: Option<IndexArg>,
        /// First cluster index in rendered prompts (0 or 1).
        #[arg(long)]
        index_base: Option<usize>,
    },
    /// Keep the most populated prompts per class and undersample evenly.
    Balance {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        prompts_per_class: Option<usize>,
        /// Train records; the total kept is train + val.
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split a balanced manifest into train and validation sets.
    Split {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        train_out: Option<PathBuf>,
        #[arg(long)]
        val_out: Option<PathBuf>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generative-model metrics over two embedding files.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Real/synthetic mixing experiment grid.
    #[command(subcommand)]
    Grid(GridCommand),
    /// Visual Turing test administration.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Reader study analysis from a responses CSV.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Run pipeline stages in dependency order and write a run manifest.
    Run {
        /// Comma-separated subset of stages; `all` (the default) runs every stage,
        /// an empty value runs none.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        stages: Vec<String>,
    },
    /// Print the resolved configuration as flat JSON.
    Config,
}

#[derive(Debug, Clone, Args)]
pub struct MetricInputs {
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Frechet distance between Gaussians fitted to the two sets.
    Fid(MetricInputs),
    /// Improved precision and recall over k-NN manifolds.
    Pr {
        #[command(flatten)]
        inputs: MetricInputs,
        /// Neighbourhood size.
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GridCommand {
    /// Expand regimes x ratios x folds into training-set plans.
    Make {
        /// Real pool manifest.
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long)]
        synth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Median and quartiles of per-fold AUCs for each grid cell.
    Aggregate {
        /// Results JSONL, one {regime, ratio_pct, fold, auc} object per line.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Sample images, write 512x512 display copies and the study definition.
    Prepare {
        #[arg(long)]
        real_dir: Option<PathBuf>,
        #[arg(long)]
        synth_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the study API until interrupted.
    Serve {
        #[arg(long)]
        definition: Option<PathBuf>,
        /// Where session event logs live.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        /// Static UI files served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Write persisted responses as CSV.
    Export {
        #[arg(long)]
        definition: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct StatsInputs {
    /// Responses CSV as written by `study export`.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Per-reader confusion counts, rates and binomial p-values.
    Readers(StatsInputs),
    /// Pairwise Cohen's kappa over all, real and synthetic items.
    Kappa(StatsInputs),
    /// Lead-time comparison of correct and incorrect calls.
    Leadtime(StatsInputs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Baseline,
    Enriched,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IndexArg {
    Words,
    Digits,
}

#[derive(Default)]
struct Flags(Overrides);

impl Flags {
    fn put<T: Serialize>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.0.push((key.to_string(), serde_json::to_value(v).expect("flag serializes")));
        }
    }

    fn path(&mut self, key: &str, value: &Option<PathBuf>) {
        self.put(key, &value.as_ref().map(|p| p.to_string_lossy().into_owned()));
    }
}

fn flags_for(cli: &Cli) -> Result<Overrides, CliError> {
    let mut f = Flags::default();
    for s in &cli.set {
        f.0.push(parse_override(s)?);
    }
    f.path("paths.out_dir", &cli.out_dir);
    match &cli.command {
        Command::Curate { input, out, report } => {
            f.path("paths.patches", input);
            f.path("paths.curated", out);
            f.path("paths.curation_report", report);
        }
        Command::Cluster {
            features,
            out,
            report,
            k,
            k_min,
            k_max,
            seed,
        } => {
            f.path("paths.features", features);
            f.path("paths.cluster_model", out);
            f.path("paths.sd_index", report);
            f.put("cluster.k", k);
            f.put("cluster.k_min", k_min);
            f.put("cluster.k_max", k_max);
            f.put("seed.cluster", seed);
        }
        Command::Assign { features, model, out } => {
            f.path("paths.features", features);
            f.path("paths.cluster_model", model);
            f.path("paths.assigned", out);
        }
        Command::Prompt {
            manifest,
            out,
            style,
            index_format,
            index_base,
        } => {
            f.path("paths.assigned", manifest);
            f.path("paths.prompts", out);
            f.put("prompt.style", &style.map(|s| format!("{s:?}").to_lowercase()));
            f.put("prompt.index_format", &index_format.map(|s| format!("{s:?}").to_lowercase()));
            f.put("prompt.index_base", index_base);
        }
        Command::Balance {
            manifest,
            out,
            prompts_per_class,
            train,
            val,
            seed,
        } => {
            f.path("paths.prompts", manifest);
            f.path("paths.balanced", out);
            f.put("balance.prompts_per_class", prompts_per_class);
            f.put("balance.train", train);
            f.put("balance.val", val);
            f.put("seed.balance", seed);
        }
        Command::Split {
            manifest,
            train_out,
            val_out,
            train,
            val,
            seed,
        } => {
            f.path("paths.balanced", manifest);
            f.path("paths.train", train_out);
            f.path("paths.val", val_out);
            f.put("balance.train", train);
            f.put("balance.val", val);
            f.put("seed.split", seed);
        }
        Command::Metrics(m) => {
            let (inputs, k) = match m {
                MetricsCommand::Fid(i) => (i, &None),
                MetricsCommand::Pr { inputs, k } => (inputs, k),
            };
            f.path("paths.real_features", &inputs.real);
            f.path("paths.synth_features", &inputs.synth);
            f.put("metrics.k", k);
        }
        Command::Grid(GridCommand::Make { real, synth, out, seed }) => {
            f.path("paths.real_pool", real);
            f.path("paths.synth_pool", synth);
            f.path("paths.grid_plans", out);
            f.put("seed.grid", seed);
        }
        Command::Grid(GridCommand::Aggregate { results, out }) => {
            f.path("paths.grid_results", results);
            f.path("paths.grid_summary", out);
        }
        Command::Study(StudyCommand::Prepare {
            real_dir,
            synth_dir,
            out,
            seed,
        }) => {
            f.path("paths.real_images", real_dir);
            f.path("paths.synth_images", synth_dir);
            f.path("paths.study_definition", out);
            f.put("seed.study", seed);
        }
        Command::Study(StudyCommand::Serve {
            definition,
            data_dir,
            addr,
            assets,
        }) => {
            f.path("paths.study_definition", definition);
            f.path("paths.study_data", data_dir);
            f.put("study.addr", addr);
            f.path("paths.ui_assets", assets);
        }
        Command::Study(StudyCommand::Export { definition, data_dir, .. }) => {
            f.path("paths.study_definition", definition);
            f.path("paths.study_data", data_dir);
        }
        Command::Stats(s) => {
            let (StatsCommand::Readers(i) | StatsCommand::Kappa(i) | StatsCommand::Leadtime(i)) = s;
            f.path("paths.responses", &i.responses);
        }
        Command::Run { .. } | Command::Config => {}
    }
    Ok(f.0)
}

/// JSON to `out`, or pretty-printed to stdout.
fn emit<T: Serialize>(value: &T, out: &Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => pipeline::write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).expect("report serializes");
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn parse_stages(names: &[String]) -> Result<Vec<Stage>, CliError> {
    let names: Vec<&str> = names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if names == ["all"] {
        return Ok(Stage::ALL.to_vec());
    }
    names.into_iter().map(str::parse).collect()
}

fn open_service(r: &Resolved) -> Result<StudyService, CliError> {
    let def_path = r.config.paths.output(Artifact::StudyDefinition);
    if !def_path.exists() {
        return Err(CliError::MissingDependency {
            stage: "study".into(),
            file: def_path.display().to_string(),
        });
    }
    let def = StudyDefinition::load(&def_path)?;
    Ok(StudyService::open(vec![def], &r.config.paths.study_data(), Arc::new(SystemClock))?)
}

fn serve(r: &Resolved) -> Result<(), CliError> {
    let service = Arc::new(open_service(r)?);
    let addr = r.config.study.addr.clone();
    let assets = r.config.paths.ui_assets.clone();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("<runtime>"), e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::io(Path::new(&addr), e))?;
        tokio::select! {
            res = histoprompt_study::serve(listener, service, assets) => res.map_err(|e| CliError::io(Path::new(&addr), e)),
            _ = tokio::signal::ctrl_c() => {
                tracing::info!("interrupted, shutting down");
                Ok(())
            }
        }
    })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let r = load_config(cli.config.as_deref(), &flags_for(cli)?)?;
    let cfg = &r.config;
    match &cli.command {
        Command::Curate { .. } => drop(run_stage(Stage::Curate, cfg)?),
        Command::Cluster { .. } => drop(run_stage(Stage::Cluster, cfg)?),
        Command::Assign { .. } => drop(run_stage(Stage::Assign, cfg)?),
        Command::Prompt { .. } => drop(run_stage(Stage::Prompt, cfg)?),
        Command::Balance { .. } => drop(run_stage(Stage::Balance, cfg)?),
        Command::Split { .. } => drop(run_stage(Stage::Split, cfg)?),
        Command::Metrics(MetricsCommand::Fid(i)) => emit(&pipeline::fid_report(cfg)?.0, &i.out)?,
        Command::Metrics(MetricsCommand::Pr { inputs, .. }) => emit(&pipeline::pr_report(cfg)?.0, &inputs.out)?,
        Command::Grid(GridCommand::Make { .. }) => drop(run_stage(Stage::Grid, cfg)?),
        Command::Grid(GridCommand::Aggregate { .. }) => drop(run_stage(Stage::Aggregate, cfg)?),
        Command::Study(StudyCommand::Prepare { .. }) => drop(run_stage(Stage::Study, cfg)?),
        Command::Study(StudyCommand::Serve { .. }) => serve(&r)?,
        Command::Study(StudyCommand::Export { out, .. }) => {
            let csv = open_service(&r)?.export_csv(&cfg.study.id)?;
            match out {
                Some(path) => std::fs::write(path, csv).map_err(|e| CliError::io(path, e))?,
                None => std::io::stdout()
                    .write_all(&csv)
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e))?,
            }
        }
        Command::Stats(StatsCommand::Readers(i)) => emit(&pipeline::readers_report(cfg)?, &i.out)?,
        Command::Stats(StatsCommand::Kappa(i)) => emit(&pipeline::kappa_report(cfg)?, &i.out)?,
        Command::Stats(StatsCommand::Leadtime(i)) => emit(&pipeline::leadtime_report(cfg)?, &i.out)?,
        Command::Run { stages } => {
            let manifest = run_pipeline(cfg, &r.flat, &parse_stages(stages)?)?;
            tracing::info!(
                stages = manifest.stages.len(),
                manifest = %pipeline::manifest_path(cfg).display(),
                "run complete"
            );
        }
        Command::Config => emit(&json!(r.flat.iter().collect::<std::collections::BTreeMap<_, &Value>>()), &None)?,
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
