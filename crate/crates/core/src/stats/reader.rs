//! Per-reader detection performance, positive class = synthetic.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::binomial::binomial_test;
use super::responses::{check_records, ResponseRecord, Truth};
use super::StatsError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }

    pub fn add(&mut self, truth: Truth, called: Truth) {
        match (truth, called) {
            (Truth::Synthetic, Truth::Synthetic) => self.tp += 1,
            (Truth::Real, Truth::Synthetic) => self.fp += 1,
            (Truth::Synthetic, Truth::Real) => self.fn_ += 1,
            (Truth::Real, Truth::Real) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderPerformance {
    pub reader_id: String,
    pub n: u64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// `None` when nothing was called synthetic.
    pub ppv: Option<f64>,
    pub ppv_undefined: bool,
    /// `None` when nothing was called real.
    pub npv: Option<f64>,
    pub npv_undefined: bool,
    pub p_value: f64,
    /// Share of "definitely" answers.
    pub confidence: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Rates from a confusion matrix; `definite` is the number of "definitely" answers.
pub fn from_counts(reader_id: &str, counts: ConfusionCounts, definite: u64) -> Result<ReaderPerformance, StatsError> {
    let n = counts.n();
    let positives = counts.tp + counts.fn_;
    let negatives = counts.tn + counts.fp;
    if positives == 0 || negatives == 0 {
        return Err(StatsError::SingleClassTruth(reader_id.to_string()));
    }
    let ppv = ratio(counts.tp, counts.tp + counts.fp);
    let npv = ratio(counts.tn, counts.tn + counts.fn_);
    Ok(ReaderPerformance {
        reader_id: reader_id.to_string(),
        n,
        counts,
        accuracy: counts.correct() as f64 / n as f64,
        sensitivity: counts.tp as f64 / positives as f64,
        specificity: counts.tn as f64 / negatives as f64,
        ppv_undefined: ppv.is_none(),
        ppv,
        npv_undefined: npv.is_none(),
        npv,
        p_value: binomial_test(counts.correct(), n, 0.5)?.max(f64::MIN_POSITIVE),
        confidence: definite as f64 / n as f64,
    })
}

/// Performance of a single reader from that reader's records.
pub fn reader_performance(records: &[ResponseRecord]) -> Result<ReaderPerformance, StatsError> {
    let first = records.first().ok_or(StatsError::EmptyInput)?;
    if let Some(other) = records.iter().find(|r| r.reader_id != first.reader_id) {
        return Err(StatsError::MixedReaders {
            first: first.reader_id.clone(),
            other: other.reader_id.clone(),
        });
    }
    check_records(records)?;
    let mut counts = ConfusionCounts::default();
    let mut definite = 0;
    for r in records {
        counts.add(r.truth, r.choice.called());
        definite += u64::from(r.choice.is_definite());
    }
    from_counts(&first.reader_id, counts, definite)
}

/// Performance of every reader, ordered by reader id. Each reader must have
/// answered every item that appears anywhere in `records`.
pub fn analyze_readers(records: &[ResponseRecord]) -> Result<Vec<ReaderPerformance>, StatsError> {
    check_records(records)?;
    let items: BTreeSet<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
    let mut by_reader: BTreeMap<&str, Vec<ResponseRecord>> = BTreeMap::new();
    for r in records {
        by_reader.entry(r.reader_id.as_str()).or_default().push(r.clone());
    }
    by_reader
        .into_iter()
        .map(|(reader, rs)| {
            if rs.len() != items.len() {
                let answered: BTreeSet<&str> = rs.iter().map(|r| r.item_id.as_str()).collect();
                return Err(StatsError::IncompleteResponses {
                    reader_id: reader.to_string(),
                    missing: items.difference(&answered).map(|s| s.to_string()).collect(),
                });
            }
            reader_performance(&rs)
        })
        .collect()
}
