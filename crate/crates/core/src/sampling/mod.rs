//! Dataset balancing and experiment-grid sampling.

mod balance;
mod grid;

use thiserror::Error;

pub use balance::{balance, split, BalancedManifest, PromptQuota};
pub use grid::{
    aggregate_results, make_grid, quantile_sorted, synthetic_count, CellSummary, GridResult,
    GridSpec, GridSummary, SamplingPlan, DEFAULT_FOLDS, DEFAULT_RATIOS_PCT, DEFAULT_REGIMES,
};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("class {label:?} has {available} distinct prompts, {required} required")]
    InsufficientPrompts {
        label: String,
        available: usize,
        required: usize,
    },
    #[error("prompt {prompt:?} has {population} records but its quota is {quota}")]
    InsufficientExamples {
        prompt: String,
        population: usize,
        quota: usize,
    },
    #[error("record {0:?} has no prompt")]
    MissingPrompt(String),
    #[error("requested {requested} records but {available} are available")]
    CountMismatch { requested: usize, available: usize },
    #[error("{pool} pool needs {needed} records but has {available}")]
    InsufficientData {
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("no results for regime {regime}, ratio {ratio_pct}%")]
    EmptyCell { regime: usize, ratio_pct: u32 },
    #[error("result for regime {regime}, ratio {ratio_pct}% is outside the grid")]
    UnknownCell { regime: usize, ratio_pct: u32 },
    #[error("auc {auc} for regime {regime}, ratio {ratio_pct}%, fold {fold} is outside [0, 1]")]
    InvalidAuc {
        regime: usize,
        ratio_pct: u32,
        fold: usize,
        auc: f64,
    },
}
