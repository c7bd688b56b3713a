//! Lead-time comparisons within and across readers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::normality::ks_normality;
use super::ranksum::rank_sum_test;
use super::responses::{ResponseRecord, Truth};
use super::StatsError;

/// Seconds spent per item, split by ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReaderTimes {
    pub real: Vec<f64>,
    pub synthetic: Vec<f64>,
}

impl ReaderTimes {
    pub fn get(&self, truth: Truth) -> &[f64] {
        match truth {
            Truth::Real => &self.real,
            Truth::Synthetic => &self.synthetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    /// KS normality p-value; `None` when undefined (fewer than two values or no spread).
    pub normality_p: Option<f64>,
}

impl GroupStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        GroupStats {
            n,
            mean,
            sd,
            normality_p: ks_normality(values).map(|r| r.p_value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderLeadTime {
    pub reader_id: String,
    pub real: GroupStats,
    pub synthetic: GroupStats,
    /// Real vs synthetic times of this reader.
    pub intra_p: f64,
    /// This reader vs all other readers pooled, real items. `None` with a single reader.
    pub inter_p_real: Option<f64>,
    pub inter_p_synthetic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeReport {
    pub readers: Vec<ReaderLeadTime>,
}

pub fn leadtime_analysis(groups: &BTreeMap<String, ReaderTimes>) -> Result<LeadTimeReport, StatsError> {
    for (reader, times) in groups {
        if times.real.is_empty() || times.synthetic.is_empty() {
            return Err(StatsError::EmptyLeadTimeGroup(reader.clone()));
        }
    }
    let inter = |reader: &str, truth: Truth| -> Result<Option<f64>, StatsError> {
        let others: Vec<f64> = groups
            .iter()
            .filter(|(r, _)| r.as_str() != reader)
            .flat_map(|(_, t)| t.get(truth).iter().copied())
            .collect();
        if others.is_empty() {
            return Ok(None);
        }
        Ok(Some(rank_sum_test(groups[reader].get(truth), &others)?.p_value))
    };
    let mut readers = Vec::with_capacity(groups.len());
    for (reader, times) in groups {
        readers.push(ReaderLeadTime {
            reader_id: reader.clone(),
            real: GroupStats::of(&times.real),
            synthetic: GroupStats::of(&times.synthetic),
            intra_p: rank_sum_test(&times.real, &times.synthetic)?.p_value,
            inter_p_real: inter(reader, Truth::Real)?,
            inter_p_synthetic: inter(reader, Truth::Synthetic)?,
        });
    }
    Ok(LeadTimeReport { readers })
}

/// Groups lead times by reader and ground truth.
pub fn group_lead_times(records: &[ResponseRecord]) -> BTreeMap<String, ReaderTimes> {
    let mut groups: BTreeMap<String, ReaderTimes> = BTreeMap::new();
    for r in records {
        let entry = groups.entry(r.reader_id.clone()).or_default();
        match r.truth {
            Truth::Real => entry.real.push(r.lead_time_s),
            Truth::Synthetic => entry.synthetic.push(r.lead_time_s),
        }
    }
    groups
}
