//! Augmentation experiment grid: one sampling plan per (real-data regime,
//! synthetic ratio, fold), and the per-cell summary of downstream AUCs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::SamplingError;
use crate::data::DatasetManifest;
use crate::seeding::{derive_seed, rng};

pub const DEFAULT_REGIMES: [usize; 7] = [10, 25, 50, 100, 500, 1000, 10000];
pub const DEFAULT_RATIOS_PCT: [u32; 6] = [0, 25, 50, 100, 200, 300];
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub regimes: Vec<usize>,
    pub ratios_pct: Vec<u32>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            regimes: DEFAULT_REGIMES.to_vec(),
            ratios_pct: DEFAULT_RATIOS_PCT.to_vec(),
            folds: DEFAULT_FOLDS,
        }
    }
}

impl GridSpec {
    pub fn plan_count(&self) -> usize {
        self.regimes.len() * self.ratios_pct.len() * self.folds
    }
}

/// Synthetic sample count for a regime and percentage, rounded half up.
pub fn synthetic_count(regime: usize, ratio_pct: u32) -> usize {
    (regime * ratio_pct as usize + 50) / 100
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub regime: usize,
    pub ratio_pct: u32,
    pub fold: usize,
    pub seed: u64,
    pub real_ids: Vec<String>,
    pub synthetic_ids: Vec<String>,
}

/// Per-class draw counts: as even as possible, remainder to the first classes,
/// with any shortfall of a small class moved to classes that still have room.
fn class_allocation(available: &[usize], count: usize) -> Vec<usize> {
    let mut alloc = vec![0; available.len()];
    let mut left = count;
    loop {
        let open: Vec<usize> = (0..available.len()).filter(|&c| alloc[c] < available[c]).collect();
        if left == 0 || open.is_empty() {
            break;
        }
        let share = left / open.len();
        let mut extra = left % open.len();
        for c in open {
            let want = share + usize::from(extra > 0);
            if extra > 0 {
                extra -= 1;
            }
            let take = want.min(available[c] - alloc[c]);
            alloc[c] += take;
            left -= take;
        }
    }
    alloc
}

/// Class-stratified sample of `count` ids drawn without replacement.
fn stratified(
    classes: &BTreeMap<&str, Vec<&str>>,
    count: usize,
    seed: u64,
) -> Vec<String> {
    let sizes: Vec<usize> = classes.values().map(Vec::len).collect();
    let alloc = class_allocation(&sizes, count);
    let mut r = rng(seed);
    let mut ids = Vec::with_capacity(count);
    for (members, take) in classes.values().zip(alloc) {
        ids.extend(sample(&mut r, members.len(), take).into_iter().map(|j| members[j].to_string()));
    }
    ids
}

fn by_class(m: &DatasetManifest) -> BTreeMap<&str, Vec<&str>> {
    let mut classes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &m.records {
        classes.entry(r.label.as_str()).or_default().push(r.id.as_str());
    }
    classes
}

/// Emits `|regimes| * |ratios| * folds` plans. Each plan draws its real and
/// synthetic subsets independently from a seed derived from
/// `(seed, regime, ratio, fold)`; folds may overlap.
pub fn make_grid(
    spec: &GridSpec,
    seed: u64,
    real: &DatasetManifest,
    synth: &DatasetManifest,
) -> Result<Vec<SamplingPlan>, SamplingError> {
    let max_real = spec.regimes.iter().copied().max().unwrap_or(0);
    if real.len() < max_real {
        return Err(SamplingError::InsufficientData {
            pool: "real",
            needed: max_real,
            available: real.len(),
        });
    }
    let max_synth = spec
        .regimes
        .iter()
        .flat_map(|&g| spec.ratios_pct.iter().map(move |&r| synthetic_count(g, r)))
        .max()
        .unwrap_or(0);
    if synth.len() < max_synth {
        return Err(SamplingError::InsufficientData {
            pool: "synthetic",
            needed: max_synth,
            available: synth.len(),
        });
    }
    let real_classes = by_class(real);
    let synth_classes = by_class(synth);

    let mut plans = Vec::with_capacity(spec.plan_count());
    for &regime in &spec.regimes {
        for &ratio in &spec.ratios_pct {
            for fold in 0..spec.folds {
                let plan_seed = derive_seed(seed, &[regime as u64, u64::from(ratio), fold as u64]);
                plans.push(SamplingPlan {
                    regime,
                    ratio_pct: ratio,
                    fold,
                    seed: plan_seed,
                    real_ids: stratified(&real_classes, regime, derive_seed(plan_seed, &[0])),
                    synthetic_ids: stratified(
                        &synth_classes,
                        synthetic_count(regime, ratio),
                        derive_seed(plan_seed, &[1]),
                    ),
                });
            }
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub regime: usize,
    pub ratio_pct: u32,
    pub fold: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub regime: usize,
    pub ratio_pct: u32,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: Vec<CellSummary>,
}

impl GridSummary {
    /// CSV with header `regime,ratio_pct,median,q1,q3,min,max`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("regime,ratio_pct,median,q1,q3,min,max\n");
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.regime, c.ratio_pct, c.median, c.q1, c.q3, c.min, c.max
            )
            .unwrap();
        }
        out
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, quartiles and range of the AUCs in every grid cell.
pub fn aggregate_results(spec: &GridSpec, results: &[GridResult]) -> Result<GridSummary, SamplingError> {
    let mut cells: BTreeMap<(usize, u32), Vec<f64>> = BTreeMap::new();
    for &regime in &spec.regimes {
        for &ratio in &spec.ratios_pct {
            cells.insert((regime, ratio), Vec::new());
        }
    }
    for r in results {
        if !(0.0..=1.0).contains(&r.auc) {
            return Err(SamplingError::InvalidAuc {
                regime: r.regime,
                ratio_pct: r.ratio_pct,
                fold: r.fold,
                auc: r.auc,
            });
        }
        cells
            .get_mut(&(r.regime, r.ratio_pct))
            .ok_or(SamplingError::UnknownCell {
                regime: r.regime,
                ratio_pct: r.ratio_pct,
            })?
            .push(r.auc);
    }
    let mut summary = Vec::with_capacity(cells.len());
    for ((regime, ratio_pct), mut aucs) in cells {
        if aucs.is_empty() {
            return Err(SamplingError::EmptyCell { regime, ratio_pct });
        }
        aucs.sort_by(f64::total_cmp);
        summary.push(CellSummary {
            regime,
            ratio_pct,
            count: aucs.len(),
            median: quantile_sorted(&aucs, 0.5),
            q1: quantile_sorted(&aucs, 0.25),
            q3: quantile_sorted(&aucs, 0.75),
            min: aucs[0],
            max: aucs[aucs.len() - 1],
        });
    }
    Ok(GridSummary { cells: summary })
}
