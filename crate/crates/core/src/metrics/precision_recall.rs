//! Improved precision and recall: each set's manifold is the union of balls
//! around its points with radius equal to the distance to the k-th nearest
//! neighbour within the set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::FeatureSet;

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRReport {
    pub precision: f64,
    pub recall: f64,
    pub k: usize,
    pub n_real: usize,
    pub n_synth: usize,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from every row to its k-th nearest other row (exact, brute force).
pub fn knn_radii(data: &[f64], d: usize, k: usize) -> Vec<f64> {
    let n = data.len() / d;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &data[i * d..(i + 1) * d];
            let mut dists: Vec<f64> = data
                .chunks_exact(d)
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, other)| distance(row, other))
                .collect();
            let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Number of `queries` rows lying in at least one ball `(reference_j, radii_j)`.
pub fn count_inside(queries: &[f64], reference: &[f64], radii: &[f64], d: usize) -> usize {
    queries
        .par_chunks(d)
        .filter(|q| {
            reference
                .chunks_exact(d)
                .zip(radii)
                .any(|(x, &r)| distance(q, x) <= r)
        })
        .count()
}

pub fn compute_improved_pr(real: &FeatureSet, synth: &FeatureSet, k: usize) -> Result<PRReport, MetricsError> {
    if real.d() != synth.d() {
        return Err(MetricsError::DimensionMismatch {
            real: real.d(),
            synth: synth.d(),
        });
    }
    if k == 0 {
        return Err(MetricsError::InvalidNeighborhood(k));
    }
    for n in [real.n(), synth.n()] {
        if n <= k {
            return Err(MetricsError::TooFewPoints { n, required: k + 1 });
        }
    }
    let d = real.d();
    let (r, s) = (real.to_f64(), synth.to_f64());
    let real_radii = knn_radii(&r, d, k);
    let synth_radii = knn_radii(&s, d, k);
    let precision = count_inside(&s, &r, &real_radii, d) as f64 / synth.n() as f64;
    let recall = count_inside(&r, &s, &synth_radii, d) as f64 / real.n() as f64;
    Ok(PRReport {
        precision,
        recall,
        k,
        n_real: real.n(),
        n_synth: synth.n(),
    })
}
