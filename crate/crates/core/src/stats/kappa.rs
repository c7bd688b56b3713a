//! Cohen's kappa, its qualitative interpretation scale, and pairwise reader
//! agreement summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::responses::{ResponseRecord, Truth};
use super::StatsError;

/// Minimal per-pair reliability criterion.
pub const RELIABILITY_THRESHOLD: f64 = 0.21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    None,
    Poor,
    Slight,
    Substantial,
    Good,
    VeryGood,
    Excellent,
    Perfect,
}

impl Agreement {
    /// Band of a kappa value. Bands are defined at two-decimal resolution, so
    /// values are rounded to the nearest hundredth first; only an exact 1 is
    /// "perfect" and only values at or below 0 are "no agreement".
    pub fn from_kappa(kappa: f64) -> Self {
        if kappa <= 0.0 {
            return Agreement::None;
        }
        if kappa >= 1.0 {
            return Agreement::Perfect;
        }
        let cents = (kappa * 100.0).round() as i64;
        match cents {
            ..=20 => Agreement::Poor,
            21..=40 => Agreement::Slight,
            41..=60 => Agreement::Substantial,
            61..=80 => Agreement::Good,
            81..=92 => Agreement::VeryGood,
            _ => Agreement::Excellent,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Agreement::None => "No agreement",
            Agreement::Poor => "Poor/chance agreement",
            Agreement::Slight => "Slight agreement",
            Agreement::Substantial => "Substantial agreement",
            Agreement::Good => "Good agreement",
            Agreement::VeryGood => "Very good agreement",
            Agreement::Excellent => "Excellent agreement",
            Agreement::Perfect => "Perfect agreement",
        }
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.description())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed: f64,
    pub expected: f64,
    /// Chance agreement was 1 (both raters constant on the same label).
    pub degenerate: bool,
    pub interpretation: Agreement,
}

/// `(p_o - p_e) / (1 - p_e)` over two aligned label sequences.
///
/// When `p_e = 1` the ratio is undefined; kappa is then 1 if the raters agree
/// everywhere and 0 otherwise, and the result is flagged degenerate.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<Kappa, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = a.len() as f64;
    let mut margin_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut margin_b: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *margin_a.entry(x).or_default() += 1;
        *margin_b.entry(y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let observed = agree as f64 / n;
    let expected: f64 = margin_a
        .iter()
        .map(|(c, &ca)| ca as f64 * margin_b.get(c).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    let degenerate = (1.0 - expected).abs() < 1e-12;
    let kappa = if degenerate {
        if agree == a.len() {
            1.0
        } else {
            0.0
        }
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(Kappa {
        kappa,
        observed,
        expected,
        degenerate,
        interpretation: Agreement::from_kappa(kappa),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSubset {
    All,
    TruthReal,
    TruthSynthetic,
}

impl KappaSubset {
    fn includes(self, truth: Truth) -> bool {
        match self {
            KappaSubset::All => true,
            KappaSubset::TruthReal => truth == Truth::Real,
            KappaSubset::TruthSynthetic => truth == Truth::Synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub reader_a: String,
    pub reader_b: String,
    pub kappa: f64,
    pub degenerate: bool,
    pub interpretation: Agreement,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    pub subset: KappaSubset,
    pub readers: Vec<String>,
    pub items: usize,
    /// Symmetric, unit diagonal, indexed like `readers`.
    pub matrix: Vec<Vec<f64>>,
    pub pairs: Vec<PairKappa>,
    pub mu: f64,
    /// Population standard deviation of the off-diagonal entries.
    pub sigma: f64,
}

/// Kappa for every unordered pair of label sequences.
pub fn pairwise_kappa<T: Ord>(
    readers: &[(String, Vec<T>)],
    subset: KappaSubset,
) -> Result<KappaSummary, StatsError> {
    if readers.len() < 2 {
        return Err(StatsError::TooFewReaders(readers.len()));
    }
    let m = readers.len();
    let mut matrix = vec![vec![1.0; m]; m];
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let k = cohen_kappa(&readers[i].1, &readers[j].1)?;
            matrix[i][j] = k.kappa;
            matrix[j][i] = k.kappa;
            pairs.push(PairKappa {
                reader_a: readers[i].0.clone(),
                reader_b: readers[j].0.clone(),
                kappa: k.kappa,
                degenerate: k.degenerate,
                interpretation: k.interpretation,
                reliable: k.kappa >= RELIABILITY_THRESHOLD,
            });
        }
    }
    let values: Vec<f64> = pairs.iter().map(|p| p.kappa).collect();
    let mu = values.iter().sum::<f64>() / values.len() as f64;
    let sigma = (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    Ok(KappaSummary {
        subset,
        readers: readers.iter().map(|r| r.0.clone()).collect(),
        items: readers[0].1.len(),
        matrix,
        pairs,
        mu,
        sigma,
    })
}

/// Pairwise agreement of dichotomized reader calls, restricted to items whose
/// ground truth falls in `subset`. Every reader must have answered the same items.
pub fn pairwise_kappa_summary(
    responses: &[ResponseRecord],
    subset: KappaSubset,
) -> Result<KappaSummary, StatsError> {
    let mut by_reader: BTreeMap<&str, BTreeMap<&str, (Truth, Truth)>> = BTreeMap::new();
    for r in responses {
        by_reader
            .entry(r.reader_id.as_str())
            .or_default()
            .insert(r.item_id.as_str(), (r.truth, r.choice.called()));
    }
    let all_items: BTreeSet<&str> = responses.iter().map(|r| r.item_id.as_str()).collect();
    for (reader, answers) in &by_reader {
        let missing: Vec<String> = all_items
            .iter()
            .filter(|i| !answers.contains_key(*i))
            .map(|i| i.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(StatsError::IncompleteResponses {
                reader_id: reader.to_string(),
                missing,
            });
        }
    }
    let labels: Vec<(String, Vec<Truth>)> = by_reader
        .iter()
        .map(|(reader, answers)| {
            let calls = answers
                .values()
                .filter(|(truth, _)| subset.includes(*truth))
                .map(|&(_, called)| called)
                .collect();
            (reader.to_string(), calls)
        })
        .collect();
    pairwise_kappa(&labels, subset)
}
