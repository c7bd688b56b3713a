//! Prompt-balanced undersampling and the balanced train/validation split.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::SamplingError;
use crate::data::{DatasetManifest, ManifestRecord};
use crate::seeding::{derive_seed, hash_str, rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptQuota {
    pub label: String,
    pub prompt: String,
    /// Records carrying this prompt before undersampling.
    pub population: usize,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedManifest {
    pub manifest: DatasetManifest,
    pub quotas: Vec<PromptQuota>,
    pub seed: u64,
}

impl BalancedManifest {
    pub fn per_prompt_quota(&self) -> BTreeMap<String, usize> {
        self.quotas.iter().map(|q| (q.prompt.clone(), q.quota)).collect()
    }

    pub fn total(&self) -> usize {
        self.quotas.iter().map(|q| q.quota).sum()
    }
}

/// Larger population first, then label and prompt text.
fn by_population(a: &PromptQuota, b: &PromptQuota) -> Ordering {
    b.population
        .cmp(&a.population)
        .then_with(|| a.prompt.cmp(&b.prompt))
        .then_with(|| a.label.cmp(&b.label))
}

fn prompt_of(record: &ManifestRecord) -> Result<&str, SamplingError> {
    record
        .prompt
        .as_deref()
        .ok_or_else(|| SamplingError::MissingPrompt(record.id.clone()))
}

/// `total` split into `parts` counts of `total / parts` or one more; the first
/// `total % parts` slots get the extra one.
fn spread(total: usize, parts: usize) -> impl Iterator<Item = usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(move |i| base + usize::from(i < extra))
}

/// Keeps the `prompts_per_class` most populated prompts of every class and
/// undersamples them to `total` records spread as evenly as possible.
///
/// Quotas are `total / P` or one more (`P` selected prompts); the extra records
/// go to the prompts with the largest original population. Sampling is
/// uniform without replacement, seeded per prompt.
pub fn balance(
    manifest: &DatasetManifest,
    prompts_per_class: usize,
    total: usize,
    seed: u64,
) -> Result<BalancedManifest, SamplingError> {
    if prompts_per_class == 0 {
        return Err(SamplingError::InsufficientPrompts {
            label: String::new(),
            available: 0,
            required: 0,
        });
    }
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, record) in manifest.records.iter().enumerate() {
        groups
            .entry((record.label.as_str(), prompt_of(record)?))
            .or_default()
            .push(i);
    }

    let mut by_class: BTreeMap<&str, Vec<PromptQuota>> = BTreeMap::new();
    for (&(label, prompt), members) in &groups {
        by_class.entry(label).or_default().push(PromptQuota {
            label: label.to_string(),
            prompt: prompt.to_string(),
            population: members.len(),
            quota: 0,
        });
    }

    let mut selected = Vec::new();
    for (label, mut prompts) in by_class {
        if prompts.len() < prompts_per_class {
            return Err(SamplingError::InsufficientPrompts {
                label: label.to_string(),
                available: prompts.len(),
                required: prompts_per_class,
            });
        }
        prompts.sort_by(by_population);
        prompts.truncate(prompts_per_class);
        selected.extend(prompts);
    }
    if selected.is_empty() {
        return Err(SamplingError::InsufficientPrompts {
            label: String::new(),
            available: 0,
            required: prompts_per_class,
        });
    }

    selected.sort_by(by_population);
    let quotas = spread(total, selected.len());
    for (q, quota) in selected.iter_mut().zip(quotas) {
        q.quota = quota;
        if q.population < quota {
            return Err(SamplingError::InsufficientExamples {
                prompt: q.prompt.clone(),
                population: q.population,
                quota,
            });
        }
    }

    let mut keep = Vec::with_capacity(total);
    for q in &selected {
        let members = &groups[&(q.label.as_str(), q.prompt.as_str())];
        let mut r = rng(derive_seed(seed, &[hash_str(&q.label), hash_str(&q.prompt)]));
        keep.extend(sample(&mut r, members.len(), q.quota).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();

    let mut out = DatasetManifest::new(keep.iter().map(|&i| manifest.records[i].clone()).collect());
    out.provenance = manifest.provenance.clone();
    out.provenance.push(format!(
        "balance prompts_per_class={prompts_per_class} prompts={} total={total} seed={seed}",
        selected.len()
    ));
    Ok(BalancedManifest {
        manifest: out,
        quotas: selected,
        seed,
    })
}

/// Splits a balanced manifest into disjoint train and validation manifests
/// whose per-prompt validation counts differ by at most one.
pub fn split(
    balanced: &BalancedManifest,
    train: usize,
    val: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), SamplingError> {
    let total = balanced.manifest.len();
    if train + val != total || total != balanced.total() {
        return Err(SamplingError::CountMismatch {
            requested: train + val,
            available: total,
        });
    }
    let mut order = balanced.quotas.clone();
    order.sort_by(|a, b| {
        b.quota
            .cmp(&a.quota)
            .then_with(|| a.prompt.cmp(&b.prompt))
            .then_with(|| a.label.cmp(&b.label))
    });

    let mut members: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, record) in balanced.manifest.records.iter().enumerate() {
        members
            .entry((record.label.as_str(), prompt_of(record)?))
            .or_default()
            .push(i);
    }

    let mut val_rows = HashSet::with_capacity(val);
    for (q, want) in order.iter().zip(spread(val, order.len())) {
        let rows = members
            .get(&(q.label.as_str(), q.prompt.as_str()))
            .map(Vec::as_slice)
            .unwrap_or_default();
        if rows.len() < want {
            return Err(SamplingError::InsufficientExamples {
                prompt: q.prompt.clone(),
                population: rows.len(),
                quota: want,
            });
        }
        let mut r = rng(derive_seed(seed, &[hash_str(&q.label), hash_str(&q.prompt), 1]));
        val_rows.extend(sample(&mut r, rows.len(), want).into_iter().map(|j| rows[j]));
    }

    let mut train_m = DatasetManifest::default();
    let mut val_m = DatasetManifest::default();
    for (i, record) in balanced.manifest.records.iter().enumerate() {
        if val_rows.contains(&i) {
            val_m.records.push(record.clone());
        } else {
            train_m.records.push(record.clone());
        }
    }
    let step = format!("split train={train} val={val} seed={seed}");
    train_m.provenance = balanced.manifest.provenance.clone();
    train_m.provenance.push(format!("{step} part=train"));
    val_m.provenance = balanced.manifest.provenance.clone();
    val_m.provenance.push(format!("{step} part=val"));
    Ok((train_m, val_m))
}
